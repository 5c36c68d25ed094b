#include "onebit/report.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <system_error>

#include "onebit/errors.hpp"
#include "onebit/sampling.hpp"

namespace onebit {

std::vector<int> predict(const Parameters& model, const Dataset& d) {
    std::vector<std::size_t> rows(d.size());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
    return predicted_classes(forward(model, gather_rows(d.features, d.dim, rows)));
}

double accuracy(std::span<const int> predicted, std::span<const int> truth) {
    if (truth.empty()) throw std::invalid_argument("accuracy of an empty test set");
    if (predicted.size() != truth.size()) throw ShapeError("prediction count does not match labels");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i] ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(truth.size());
}

double evaluate(const Parameters& model, const Dataset& test) {
    if (test.size() == 0) throw std::invalid_argument("accuracy of an empty test set");
    return accuracy(predict(model, test), test.labels);
}

GroupCounts class_group_histogram(std::span<const int> predicted, int classes, double band) {
    if (classes < 2) throw DomainError("classes must be >= 2");
    if (!(band >= 0.0)) throw DomainError("band must be >= 0");
    std::vector<std::size_t> counts(static_cast<std::size_t>(classes), 0);
    for (int p : predicted) {
        if (p < 0 || p >= classes) throw DomainError("predicted class out of range");
        ++counts[static_cast<std::size_t>(p)];
    }
    const double mu = static_cast<double>(predicted.size()) / static_cast<double>(classes);
    const double lower = std::max(0.0, mu - band);
    const double upper = mu + band;
    GroupCounts g;
    for (std::size_t m : counts) {
        const double v = static_cast<double>(m);
        if (v < lower) {
            g.g0 += m;
        } else if (v <= upper) {
            g.g1 += m;
        } else {
            g.g2 += m;
        }
    }
    return g;
}

double default_band(std::size_t n, int classes) {
    const double mu = static_cast<double>(n) / static_cast<double>(classes);
    return std::max(1.0, std::round(0.1 * mu));
}

namespace {

// Shortest representation that parses back to the same double.
std::string fmt_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& s, const std::string& where) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw std::runtime_error("cannot parse number \"" + s + "\" in " + where);
    }
    return v;
}

std::size_t parse_size(const std::string& s, const std::string& where) {
    std::size_t v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw std::runtime_error("cannot parse integer \"" + s + "\" in " + where);
    }
    return v;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) out.push_back(field);
    return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::filesystem::filesystem_error("cannot open", path,
                                                std::make_error_code(std::errc::no_such_file_or_directory));
    }
    return in;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::filesystem::filesystem_error("cannot open for writing", path,
                                                std::make_error_code(std::errc::permission_denied));
    }
    out << text;
    if (!out) throw std::filesystem::filesystem_error("write failed", path, std::make_error_code(std::errc::io_error));
}

std::vector<std::vector<std::string>> read_table(const std::filesystem::path& path, const std::string& header) {
    auto in = open_in(path);
    std::string line;
    if (!std::getline(in, line) || line != header) {
        throw std::runtime_error(path.string() + ": expected header \"" + header + "\"");
    }
    const std::size_t columns = split_csv_line(header).size();
    std::vector<std::vector<std::string>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto fields = split_csv_line(line);
        if (fields.size() != columns) throw std::runtime_error(path.string() + ": malformed row \"" + line + "\"");
        rows.push_back(std::move(fields));
    }
    return rows;
}

}  // namespace

std::string accuracy_arrow(std::span<const StageResult> stages) {
    std::string out;
    char buf[32];
    for (std::size_t i = 0; i < stages.size(); ++i) {
        if (i > 0) out += "→";
        std::snprintf(buf, sizeof(buf), "%.2f", 100.0 * stages[i].accuracy);
        out += buf;
    }
    return out;
}

void write_report(const Report& report, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw std::filesystem::filesystem_error("cannot create report directory", dir, ec);

    std::ostringstream metrics;
    metrics << "stage,accuracy,n_pos,n_neg,bits\n";
    for (const auto& s : report.stages) {
        metrics << s.stage << ',' << fmt_double(s.accuracy) << ',' << s.n_pos << ',' << s.n_neg << ','
                << fmt_double(s.bits) << '\n';
    }
    write_text(dir / "metrics.csv", metrics.str());

    std::ostringstream groups;
    groups << "stage,g0,g1,g2\n";
    for (const auto& s : report.stages) {
        groups << s.stage << ',' << s.groups.g0 << ',' << s.groups.g1 << ',' << s.groups.g2 << '\n';
    }
    write_text(dir / "groups.csv", groups.str());

    std::ostringstream log;
    report.log.write_csv(log);
    write_text(dir / "querylog.csv", log.str());

    write_text(dir / "config.json", report.config.dump(2) + "\n");

    nlohmann::json summary;
    summary["name"] = report.name;
    summary["arm"] = report.arm;
    summary["final_accuracy"] = report.final_accuracy();
    summary["ledger"] = {{"total_bits", report.ledger.total_bits},
                         {"spent_bits", report.ledger.spent_bits},
                         {"n_full", report.ledger.n_full},
                         {"n_queries", report.ledger.n_queries}};
    summary["max_suppressed_prob"] = report.max_suppressed_prob;
    summary["max_normalization_error"] = report.max_normalization_error;
    nlohmann::json stages = nlohmann::json::array();
    for (const auto& s : report.stages) {
        stages.push_back({{"stage", s.stage},
                          {"accuracy", s.accuracy},
                          {"n_pos", s.n_pos},
                          {"n_neg", s.n_neg},
                          {"bits", s.bits},
                          {"guess_accuracy", s.guess_accuracy},
                          {"n_labeled", s.n_labeled},
                          {"mode", s.mode}});
    }
    summary["stages"] = stages;
    write_text(dir / "summary.json", summary.dump(2) + "\n");
}

std::vector<StageResult> read_metrics(const std::filesystem::path& path) {
    std::vector<StageResult> out;
    const std::string where = path.string();
    for (const auto& f : read_table(path, "stage,accuracy,n_pos,n_neg,bits")) {
        StageResult s;
        s.stage = static_cast<int>(parse_size(f[0], where));
        s.accuracy = parse_double(f[1], where);
        s.n_pos = parse_size(f[2], where);
        s.n_neg = parse_size(f[3], where);
        s.bits = parse_double(f[4], where);
        const std::size_t queried = s.n_pos + s.n_neg;
        s.guess_accuracy = queried == 0 ? 0.0 : static_cast<double>(s.n_pos) / static_cast<double>(queried);
        out.push_back(s);
    }
    return out;
}

std::vector<GroupCounts> read_groups(const std::filesystem::path& path) {
    std::vector<GroupCounts> out;
    const std::string where = path.string();
    for (const auto& f : read_table(path, "stage,g0,g1,g2")) {
        out.push_back({parse_size(f[1], where), parse_size(f[2], where), parse_size(f[3], where)});
    }
    return out;
}

ReportSummary read_summary(const std::filesystem::path& dir) {
    auto in = open_in(dir / "summary.json");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error((dir / "summary.json").string() + ": " + e.what());
    }
    ReportSummary s;
    s.name = j.at("name").get<std::string>();
    s.arm = j.at("arm").get<std::string>();
    s.final_accuracy = j.at("final_accuracy").get<double>();
    const auto& l = j.at("ledger");
    s.ledger = {l.at("total_bits").get<double>(), l.at("spent_bits").get<double>(),
                l.at("n_full").get<std::size_t>(), l.at("n_queries").get<std::size_t>()};
    s.stage_count = j.at("stages").size();
    return s;
}

}  // namespace onebit
