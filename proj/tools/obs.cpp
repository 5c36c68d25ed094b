// obs: command-line front end for one-bit supervision experiments.
//
// Exit codes: 0 success, 2 usage or config error, 3 I/O error.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "onebit/config.hpp"
#include "onebit/data.hpp"
#include "onebit/errors.hpp"
#include "onebit/orchestrator.hpp"
#include "onebit/report.hpp"
#include "onebit/theory.hpp"

namespace fs = std::filesystem;
using namespace onebit;

namespace {

constexpr int kOk = 0;
constexpr int kUsage = 2;
constexpr int kIo = 3;

struct IoFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

int cmd_gen_data(int classes, std::size_t per_class, std::size_t dim, double sep, std::uint64_t seed,
                 const fs::path& out) {
    const Dataset d = generate_synthetic(classes, per_class, dim, sep, seed);
    save_dataset(d, out);
    std::printf("N=%zu d=%zu C=%d -> %s\n", d.size(), d.dim, d.classes, out.string().c_str());
    return kOk;
}

int cmd_plan(std::optional<double> total_bits, std::optional<double> full_equivalent, int classes,
             std::size_t n_full, bool overshoot) {
    const double total = total_bits ? *total_bits : *full_equivalent * std::log2(static_cast<double>(classes));
    const BudgetPlan p = plan_budget(total, classes, n_full, overshoot);
    std::printf("%-10s %-10s %-14s %-14s %-14s\n", "n_full", "n_queries", "full_bits", "planned_bits", "budget_bits");
    std::printf("%-10zu %-10zu %-14.1f %-14.1f %-14.1f\n", p.n_full, p.n_queries,
                static_cast<double>(p.n_full) * std::log2(static_cast<double>(classes)), p.planned_bits,
                p.total_bits);
    return kOk;
}

int cmd_theory_threshold(int classes) {
    std::printf("%.6f\n", theory::efficiency_threshold(classes));
    return kOk;
}

int cmd_theory_curve(int classes, const fs::path& out) {
    std::ofstream f(out);
    if (!f) throw IoFailure("cannot open " + out.string() + " for writing");
    const double rhs = theory::efficiency_rhs(classes);
    f << "p,f,rhs\n";
    char buf[96];
    for (int i = 1; i < 100; ++i) {
        const double p = i / 100.0;
        std::snprintf(buf, sizeof(buf), "%.2f,%.12g,%.12g\n", p, theory::efficiency_curve(p), rhs);
        f << buf;
    }
    if (!f) throw IoFailure("write failed: " + out.string());
    return kOk;
}

int cmd_run(const fs::path& config_path, const fs::path& out, const std::optional<fs::path>& checkpoint) {
    if (!fs::exists(config_path)) throw IoFailure("config not found: " + config_path.string());
    ExperimentConfig config = load_config(config_path);
    if (const char* s = std::getenv("OBS_SEED"); s != nullptr && *s != '\0') {
        try {
            std::size_t used = 0;
            config.seed = std::stoull(s, &used);
            if (used != std::string(s).size()) throw std::invalid_argument(s);
        } catch (const std::exception&) {
            throw ConfigError("/seed", std::string("OBS_SEED is not an unsigned integer: ") + s);
        }
    }
    const ExperimentData data = load_experiment_data(config);
    ClassifierState model(Architecture{data.train.dim, config.hidden, data.train.classes}, 0);
    const Report report = run(config, data, &model);
    write_report(report, out);
    if (checkpoint) save_checkpoint(model, *checkpoint);
    std::printf("%s\n", accuracy_arrow(report.stages).c_str());
    return kOk;
}

void print_report(const fs::path& dir) {
    const ReportSummary s = read_summary(dir);
    const auto metrics = read_metrics(dir / "metrics.csv");
    const auto groups = read_groups(dir / "groups.csv");
    std::printf("%s (%s)  final accuracy %.2f%%\n", s.name.c_str(), s.arm.c_str(), 100.0 * s.final_accuracy);
    std::printf("bits: %.3f spent of %.3f (%zu full labels, %zu queries)\n", s.ledger.spent_bits,
                s.ledger.total_bits, s.ledger.n_full, s.ledger.n_queries);
    std::printf("%-6s %-9s %-7s %-7s %-12s %-10s %s\n", "stage", "accuracy", "n_pos", "n_neg", "bits", "guess_acc",
                "g0/g1/g2");
    for (std::size_t i = 0; i < metrics.size(); ++i) {
        const auto& m = metrics[i];
        std::string g = "-";
        if (i < groups.size()) {
            g = std::to_string(groups[i].g0) + "/" + std::to_string(groups[i].g1) + "/" + std::to_string(groups[i].g2);
        }
        std::printf("%-6d %-9.2f %-7zu %-7zu %-12.3f %-10.4f %s\n", m.stage, 100.0 * m.accuracy, m.n_pos, m.n_neg,
                    m.bits, m.guess_accuracy, g.c_str());
    }
}

int cmd_analyze(const fs::path& report_dir, const std::optional<fs::path>& compare_dir) {
    auto load = [](const fs::path& dir) {
        try {
            return std::pair{read_summary(dir), read_metrics(dir / "metrics.csv")};
        } catch (const fs::filesystem_error& e) {
            throw IoFailure(e.what());
        }
    };
    auto [a, a_metrics] = load(report_dir);
    try {
        print_report(report_dir);
    } catch (const fs::filesystem_error& e) {
        throw IoFailure(e.what());
    }
    if (!compare_dir) return kOk;

    auto [b, b_metrics] = load(*compare_dir);
    std::printf("\ncompare %s vs %s\n", a.name.c_str(), b.name.c_str());
    const std::size_t n = std::min(a_metrics.size(), b_metrics.size());
    for (std::size_t i = 0; i < n; ++i) {
        std::printf("stage %d delta %+.2f\n", a_metrics[i].stage,
                    100.0 * (a_metrics[i].accuracy - b_metrics[i].accuracy));
    }
    std::printf("final delta %+.2f\n", 100.0 * (a.final_accuracy - b.final_accuracy));
    const double bits_gap = a.ledger.total_bits - b.ledger.total_bits;
    std::printf("total bits %.3f vs %.3f (%s)\n", a.ledger.total_bits, b.ledger.total_bits,
                bits_gap == 0.0 ? "equal" : "DIFFERENT");
    if (bits_gap != 0.0) {
        std::fprintf(stderr, "error: reports were produced under different bit budgets\n");
        return kUsage;
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"One-bit supervision experiments"};
    app.require_subcommand(1);

    int classes = 10;
    std::size_t per_class = 200;
    std::size_t dim = 16;
    double sep = 0.55;
    std::uint64_t seed = 7;
    fs::path out;
    auto* gen = app.add_subcommand("gen-data", "Write a synthetic Gaussian-mixture dataset");
    gen->add_option("--classes", classes, "Number of classes")->check(CLI::Range(2, 65535));
    gen->add_option("--per-class", per_class, "Samples per class")->check(CLI::Range(std::size_t{2}, std::size_t{1} << 30));
    gen->add_option("--dim", dim, "Feature dimension")->check(CLI::Range(std::size_t{2}, std::size_t{65535}));
    gen->add_option("--sep", sep, "Class mean separation")->check(CLI::PositiveNumber);
    gen->add_option("--seed", seed, "Random seed");
    gen->add_option("--out", out, "Output file")->required();

    std::optional<double> total_bits;
    std::optional<double> full_equivalent;
    std::size_t n_full = 0;
    bool overshoot = false;
    auto* plan = app.add_subcommand("plan", "Split a bit budget into full labels and one-bit queries");
    auto* tb = plan->add_option("--total-bits", total_bits, "Budget in bits")->check(CLI::NonNegativeNumber);
    auto* fe = plan->add_option("--full-equivalent", full_equivalent, "Budget as a count of full labels")
                   ->check(CLI::NonNegativeNumber);
    tb->excludes(fe);
    plan->add_option("--classes", classes, "Number of classes")->required()->check(CLI::Range(2, 65535));
    plan->add_option("--n-full", n_full, "Full labels in the plan")->required();
    plan->add_flag("--allow-overshoot", overshoot, "Round queries up to the next thousand");

    auto* theory_cmd = app.add_subcommand("theory", "Efficiency threshold of one-bit queries");
    theory_cmd->require_subcommand(1);
    auto* threshold = theory_cmd->add_subcommand("threshold", "Print the smallest efficient guess probability");
    threshold->add_option("--classes", classes, "Number of classes")->required()->check(CLI::Range(2, 1 << 30));
    auto* curve = theory_cmd->add_subcommand("curve", "Write the efficiency curve as CSV (p,f,rhs)");
    curve->add_option("--classes", classes, "Number of classes")->required()->check(CLI::Range(2, 1 << 30));
    curve->add_option("--out", out, "Output CSV")->required();

    fs::path config_path;
    auto* run_cmd = app.add_subcommand("run", "Run an experiment described by a JSON config");
    run_cmd->add_option("--config", config_path, "Config file")->required();
    run_cmd->add_option("--out", out, "Report directory")->required();
    std::optional<fs::path> save_to;
    run_cmd->add_option("--save-checkpoint", save_to, "Write the final model here");

    fs::path report_dir;
    std::optional<fs::path> compare_dir;
    auto* analyze = app.add_subcommand("analyze", "Summarize a report directory");
    analyze->add_option("--report", report_dir, "Report directory")->required();
    analyze->add_option("--compare", compare_dir, "Second report for an equal-bits comparison");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    }

    try {
        if (*gen) return cmd_gen_data(classes, per_class, dim, sep, seed, out);
        if (*plan) {
            if (!total_bits && !full_equivalent) {
                std::fprintf(stderr, "plan: one of --total-bits or --full-equivalent is required\n");
                return kUsage;
            }
            return cmd_plan(total_bits, full_equivalent, classes, n_full, overshoot);
        }
        if (*threshold) return cmd_theory_threshold(classes);
        if (*curve) return cmd_theory_curve(classes, out);
        if (*run_cmd) return cmd_run(config_path, out, save_to);
        if (*analyze) return cmd_analyze(report_dir, compare_dir);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error at %s: %s\n", e.pointer().c_str(), e.what());
        return kUsage;
    } catch (const IoFailure& e) {
        std::fprintf(stderr, "I/O error: %s\n", e.what());
        return kIo;
    } catch (const fs::filesystem_error& e) {
        std::fprintf(stderr, "I/O error: %s\n", e.what());
        return kIo;
    } catch (const FormatError& e) {
        std::fprintf(stderr, "I/O error: %s (byte offset %zu)\n", e.what(), e.offset());
        return kIo;
    } catch (const CheckpointError& e) {
        std::fprintf(stderr, "I/O error: %s\n", e.what());
        return kIo;
    } catch (const std::exception& e) {
        // Budget, domain and protocol violations all stem from the inputs.
        std::fprintf(stderr, "error: %s\n", e.what());
        return kUsage;
    }
    return kUsage;
}
