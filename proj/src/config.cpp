#include "onebit/config.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "onebit/errors.hpp"

namespace onebit {

using nlohmann::json;

namespace {

std::string escape_token(const std::string& key) {
    std::string out;
    for (char c : key) {
        if (c == '~') {
            out += "~0";
        } else if (c == '/') {
            out += "~1";
        } else {
            out += c;
        }
    }
    return out;
}

// Reads keys out of one JSON object and rejects whatever was not consumed.
class ObjectReader {
public:
    ObjectReader(const json& obj, std::string pointer) : obj_(obj), pointer_(std::move(pointer)) {
        if (!obj_.is_object()) throw ConfigError(pointer_, "expected an object");
    }

    ~ObjectReader() noexcept(false) {
        if (std::uncaught_exceptions() == 0) finish();
    }

    std::string at(const std::string& key) const { return pointer_ + "/" + escape_token(key); }

    bool has(const std::string& key) const { return obj_.contains(key); }

    const json* find(const std::string& key) {
        auto it = obj_.find(key);
        if (it == obj_.end()) return nullptr;
        seen_.insert(key);
        return &*it;
    }

    template <class T>
    void get(const std::string& key, T& out) {
        if (const json* v = find(key)) out = convert<T>(*v, at(key));
    }

    template <class T>
    static T convert(const json& v, const std::string& ptr) {
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) throw ConfigError(ptr, "expected a boolean");
            return v.get<bool>();
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) throw ConfigError(ptr, "expected a string");
            return v.get<std::string>();
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) throw ConfigError(ptr, "expected a number");
            return v.get<T>();
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer()) throw ConfigError(ptr, "expected an integer");
            if (std::is_unsigned_v<T> && v.get<std::int64_t>() < 0 && !v.is_number_unsigned()) {
                throw ConfigError(ptr, "expected a non-negative integer");
            }
            return v.get<T>();
        } else {
            static_assert(sizeof(T) == 0, "unsupported config type");
        }
    }

    void finish() {
        for (auto it = obj_.begin(); it != obj_.end(); ++it) {
            if (!seen_.count(it.key())) throw ConfigError(at(it.key()), "unknown key");
        }
    }

private:
    const json& obj_;
    std::string pointer_;
    std::set<std::string> seen_;
};

template <class T>
std::vector<T> read_array(const json& v, const std::string& ptr) {
    if (!v.is_array()) throw ConfigError(ptr, "expected an array");
    std::vector<T> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out.push_back(ObjectReader::convert<T>(v[i], ptr + "/" + std::to_string(i)));
    }
    return out;
}

void require(bool ok, const std::string& ptr, const std::string& what) {
    if (!ok) throw ConfigError(ptr, what);
}

void parse_dataset(const json& v, DatasetSpec& out) {
    ObjectReader r(v, "/dataset");
    if (const json* s = r.find("synthetic")) {
        require(!r.has("train") && !r.has("test"), "/dataset", "give either synthetic or train/test, not both");
        SyntheticSpec spec;
        ObjectReader sr(*s, "/dataset/synthetic");
        sr.get("classes", spec.classes);
        sr.get("per_class", spec.per_class);
        sr.get("test_per_class", spec.test_per_class);
        sr.get("dim", spec.dim);
        sr.get("separation", spec.separation);
        sr.get("seed", spec.seed);
        require(spec.classes >= 2, sr.at("classes"), "must be >= 2");
        require(spec.per_class >= 2, sr.at("per_class"), "must be >= 2");
        require(spec.test_per_class >= 2, sr.at("test_per_class"), "must be >= 2");
        require(spec.dim >= 2, sr.at("dim"), "must be >= 2");
        require(spec.separation > 0.0, sr.at("separation"), "must be > 0");
        out.synthetic = spec;
        return;
    }
    std::string train;
    std::string test;
    r.get("train", train);
    r.get("test", test);
    require(!train.empty(), "/dataset/train", "required unless /dataset/synthetic is given");
    require(!test.empty(), "/dataset/test", "required unless /dataset/synthetic is given");
    out.train_path = train;
    out.test_path = test;
}

void parse_strategy_value(const json& v, Strategy& out) {
    if (v.is_string()) {
        try {
            out.kind = parse_strategy(v.get<std::string>());
        } catch (const std::invalid_argument& e) {
            throw ConfigError("/strategy", e.what());
        }
        return;
    }
    ObjectReader r(v, "/strategy");
    std::string kind = "random";
    r.get("kind", kind);
    try {
        out.kind = parse_strategy(kind);
    } catch (const std::invalid_argument& e) {
        throw ConfigError("/strategy/kind", e.what());
    }
    r.get("repeats", out.repeats);
    r.get("noise_scale", out.noise_scale);
    require(out.repeats >= 2, r.at("repeats"), "must be >= 2");
    require(out.noise_scale >= 0.0, r.at("noise_scale"), "must be >= 0");
}

void parse_train(const json& v, TrainingSpec& t) {
    ObjectReader r(v, "/train");
    r.get("epochs_initial", t.epochs_initial);
    r.get("epochs_per_stage", t.epochs_per_stage);
    r.get("lr", t.lr);
    r.get("batch_size", t.batch_size);
    r.get("weight_decay", t.weight_decay);
    r.get("input_noise", t.input_noise);
    r.get("rampup_fraction", t.rampup_fraction);
    require(t.lr > 0.0, r.at("lr"), "must be > 0");
    require(t.batch_size > 0, r.at("batch_size"), "must be > 0");
    require(t.weight_decay >= 0.0, r.at("weight_decay"), "must be >= 0");
    require(t.input_noise >= 0.0, r.at("input_noise"), "must be >= 0");
    require(t.rampup_fraction >= 0.0 && t.rampup_fraction <= 1.0, r.at("rampup_fraction"), "must lie in [0,1]");
}

void parse_loss(const json& v, LossConfig& loss, WeightScheme& weights) {
    ObjectReader r(v, "/loss");
    r.get("lambda", loss.lambda_consistency);
    r.get("mu", loss.mu_negative);
    r.get("nls", loss.nls_enabled);
    r.get("suppression", loss.suppression_constant);
    r.get("ema_decay", loss.ema_decay);
    std::string scheme = "none";
    r.get("class_weights", scheme);
    if (scheme == "none") {
        weights = WeightScheme::None;
    } else if (scheme == "balance") {
        weights = WeightScheme::Balance;
    } else if (scheme == "inverse") {
        weights = WeightScheme::Inverse;
    } else {
        throw ConfigError(r.at("class_weights"), "expected none, balance or inverse");
    }
    require(loss.lambda_consistency >= 0.0, r.at("lambda"), "must be >= 0");
    require(loss.mu_negative >= 0.0, r.at("mu"), "must be >= 0");
    require(loss.suppression_constant <= -1e4, r.at("suppression"), "must be <= -1e4");
    require(loss.ema_decay >= 0.0 && loss.ema_decay < 1.0, r.at("ema_decay"), "must lie in [0,1)");
}

}  // namespace

ExperimentConfig parse_config(const json& doc) {
    ExperimentConfig c;
    ObjectReader r(doc, "");

    r.get("name", c.name);
    r.get("seed", c.seed);

    std::string arm = "one_bit";
    r.get("arm", arm);
    if (arm == "one_bit") {
        c.arm = Arm::OneBit;
    } else if (arm == "baseline") {
        c.arm = Arm::Baseline;
    } else {
        throw ConfigError("/arm", "expected one_bit or baseline");
    }

    const json* dataset = r.find("dataset");
    require(dataset != nullptr, "/dataset", "required");
    parse_dataset(*dataset, c.dataset);

    r.get("n_full", c.n_full);
    if (const json* q = r.find("stage_quotas")) c.stage_quotas = read_array<std::size_t>(*q, "/stage_quotas");

    if (const json* b = r.find("budget")) {
        ObjectReader br(*b, "/budget");
        double total = 0.0;
        double full_eq = 0.0;
        const bool has_total = br.has("total_bits");
        const bool has_eq = br.has("full_equivalent");
        require(has_total != has_eq, "/budget", "give exactly one of total_bits or full_equivalent");
        if (has_total) {
            br.get("total_bits", total);
            require(total >= 0.0, br.at("total_bits"), "must be >= 0");
            c.total_bits = total;
        } else {
            br.get("full_equivalent", full_eq);
            require(full_eq >= 0.0, br.at("full_equivalent"), "must be >= 0");
            c.full_equivalent = full_eq;
        }
    }
    r.get("allow_overshoot", c.allow_overshoot);

    if (const json* s = r.find("strategy")) parse_strategy_value(*s, c.strategy);

    std::string mode = "mean_teacher";
    r.get("training_mode", mode);
    if (mode == "mean_teacher") {
        c.training_mode = TrainingMode::MeanTeacher;
    } else if (mode == "finetune") {
        c.training_mode = TrainingMode::Finetune;
    } else {
        throw ConfigError("/training_mode", "expected mean_teacher or finetune");
    }

    if (const json* m = r.find("model")) {
        ObjectReader mr(*m, "/model");
        if (const json* h = mr.find("hidden")) c.hidden = read_array<std::size_t>(*h, "/model/hidden");
        for (std::size_t i = 0; i < c.hidden.size(); ++i) {
            require(c.hidden[i] > 0, "/model/hidden/" + std::to_string(i), "must be > 0");
        }
    }
    if (const json* t = r.find("train")) parse_train(*t, c.train);
    if (const json* l = r.find("loss")) parse_loss(*l, c.loss, c.weights);

    if (const json* init = r.find("init")) {
        if (init->is_string()) {
            require(init->get<std::string>() == "scratch", "/init", "expected \"scratch\" or an object");
        } else {
            ObjectReader ir(*init, "/init");
            std::string path;
            ir.get("checkpoint", path);
            require(!path.empty(), "/init/checkpoint", "required");
            c.checkpoint = path;
            ir.get("finetune", c.finetune_checkpoint);
        }
    }
    r.get("cold_start", c.cold_start);

    if (const json* o = r.find("oracle")) {
        ObjectReader orr(*o, "/oracle");
        orr.get("noise_rate", c.oracle_noise);
        require(c.oracle_noise >= 0.0 && c.oracle_noise < 0.5, orr.at("noise_rate"), "must lie in [0, 0.5)");
    }

    if (const json* p = r.find("pure_one_bit")) {
        ObjectReader pr(*p, "/pure_one_bit");
        c.pure_one_bit = true;
        pr.get("enabled", c.pure_one_bit);
        pr.get("switch_threshold", c.switch_threshold);
        pr.get("stages", c.pure_stages);
        pr.get("query_fraction", c.pure_query_fraction);
        pr.get("plateau", c.plateau);
        require(c.switch_threshold >= 0.0 && c.switch_threshold <= 1.0, pr.at("switch_threshold"),
                "must lie in [0,1]");
        require(c.pure_stages >= 1, pr.at("stages"), "must be >= 1");
        require(c.pure_query_fraction > 0.0 && c.pure_query_fraction <= 1.0, pr.at("query_fraction"),
                "must lie in (0,1]");
        require(c.plateau >= 0.0, pr.at("plateau"), "must be >= 0");
    }

    if (c.pure_one_bit) {
        require(c.n_full == 0, "/n_full", "pure one-bit mode starts without full labels");
        require(!c.checkpoint.empty(), "/init", "pure one-bit mode needs a checkpoint");
        require(c.arm == Arm::OneBit, "/arm", "pure one-bit mode runs the one_bit arm");
    } else if (c.arm == Arm::OneBit) {
        require(!c.stage_quotas.empty(), "/stage_quotas", "needs at least one stage");
    }
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::filesystem::filesystem_error("cannot open config", path,
                                                std::make_error_code(std::errc::no_such_file_or_directory));
    }
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("", std::string("invalid JSON: ") + e.what());
    }
    return parse_config(doc);
}

json config_to_json(const ExperimentConfig& c) {
    json j;
    j["name"] = c.name;
    j["seed"] = c.seed;
    j["arm"] = c.arm == Arm::OneBit ? "one_bit" : "baseline";
    if (c.dataset.synthetic) {
        const auto& s = *c.dataset.synthetic;
        j["dataset"]["synthetic"] = {{"classes", s.classes},   {"per_class", s.per_class},
                                     {"test_per_class", s.test_per_class}, {"dim", s.dim},
                                     {"separation", s.separation}, {"seed", s.seed}};
    } else {
        j["dataset"] = {{"train", c.dataset.train_path.string()}, {"test", c.dataset.test_path.string()}};
    }
    j["n_full"] = c.n_full;
    j["stage_quotas"] = c.stage_quotas;
    if (c.total_bits) j["budget"] = {{"total_bits", *c.total_bits}};
    if (c.full_equivalent) j["budget"] = {{"full_equivalent", *c.full_equivalent}};
    j["allow_overshoot"] = c.allow_overshoot;
    j["strategy"] = {{"kind", std::string(strategy_name(c.strategy.kind))},
                     {"repeats", c.strategy.repeats},
                     {"noise_scale", c.strategy.noise_scale}};
    j["training_mode"] = c.training_mode == TrainingMode::MeanTeacher ? "mean_teacher" : "finetune";
    j["model"] = {{"hidden", c.hidden}};
    j["train"] = {{"epochs_initial", c.train.epochs_initial}, {"epochs_per_stage", c.train.epochs_per_stage},
                  {"lr", c.train.lr},                         {"batch_size", c.train.batch_size},
                  {"weight_decay", c.train.weight_decay},     {"input_noise", c.train.input_noise},
                  {"rampup_fraction", c.train.rampup_fraction}};
    const char* scheme = c.weights == WeightScheme::None ? "none" : c.weights == WeightScheme::Balance ? "balance" : "inverse";
    j["loss"] = {{"lambda", c.loss.lambda_consistency}, {"mu", c.loss.mu_negative},
                 {"nls", c.loss.nls_enabled},           {"suppression", c.loss.suppression_constant},
                 {"ema_decay", c.loss.ema_decay},       {"class_weights", scheme}};
    if (c.checkpoint.empty()) {
        j["init"] = "scratch";
    } else {
        j["init"] = {{"checkpoint", c.checkpoint.string()}, {"finetune", c.finetune_checkpoint}};
    }
    j["cold_start"] = c.cold_start;
    j["oracle"] = {{"noise_rate", c.oracle_noise}};
    if (c.pure_one_bit) {
        j["pure_one_bit"] = {{"enabled", true},
                             {"switch_threshold", c.switch_threshold},
                             {"stages", c.pure_stages},
                             {"query_fraction", c.pure_query_fraction},
                             {"plateau", c.plateau}};
    }
    return j;
}

double resolve_total_bits(const ExperimentConfig& c, int classes, std::size_t pool_size) {
    const double cost_full = std::log2(static_cast<double>(classes));
    if (c.total_bits) return *c.total_bits;
    if (c.full_equivalent) return *c.full_equivalent * cost_full;
    if (c.pure_one_bit) return static_cast<double>(pool_size) * cost_full;
    const double queries = static_cast<double>(std::accumulate(c.stage_quotas.begin(), c.stage_quotas.end(), std::size_t{0}));
    return static_cast<double>(c.n_full) * cost_full + queries;
}

ExperimentConfig make_baseline(const ExperimentConfig& config) {
    ExperimentConfig b = config;
    b.arm = Arm::Baseline;
    b.name = config.name + "-baseline";
    b.pure_one_bit = false;
    return b;
}

}  // namespace onebit
