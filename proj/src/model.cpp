#include "onebit/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "binary_io.hpp"
#include "onebit/errors.hpp"
#include "onebit/random.hpp"

namespace onebit {

// ---------------------------------------------------------------------------
// Parameters

Parameters Parameters::zeros_like() const {
    Parameters out;
    out.layers.reserve(layers.size());
    for (const auto& l : layers) {
        out.layers.push_back({Eigen::MatrixXd::Zero(l.weights.rows(), l.weights.cols()),
                              Eigen::VectorXd::Zero(l.bias.size())});
    }
    return out;
}

bool Parameters::same_shape(const Parameters& other) const {
    if (layers.size() != other.layers.size()) return false;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (layers[i].weights.rows() != other.layers[i].weights.rows() ||
            layers[i].weights.cols() != other.layers[i].weights.cols() ||
            layers[i].bias.size() != other.layers[i].bias.size()) {
            return false;
        }
    }
    return true;
}

void Parameters::add_scaled(const Parameters& other, double alpha) {
    if (!same_shape(other)) throw ShapeError("parameter shapes differ");
    for (std::size_t i = 0; i < layers.size(); ++i) {
        layers[i].weights += alpha * other.layers[i].weights;
        layers[i].bias += alpha * other.layers[i].bias;
    }
}

void Parameters::scale(double factor) {
    for (auto& l : layers) {
        l.weights *= factor;
        l.bias *= factor;
    }
}

bool Parameters::all_finite() const {
    for (const auto& l : layers) {
        if (!l.weights.allFinite() || !l.bias.allFinite()) return false;
    }
    return true;
}

double Parameters::max_abs_diff(const Parameters& other) const {
    if (!same_shape(other)) throw ShapeError("parameter shapes differ");
    double m = 0.0;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (layers[i].weights.size() > 0) {
            m = std::max(m, (layers[i].weights - other.layers[i].weights).cwiseAbs().maxCoeff());
        }
        if (layers[i].bias.size() > 0) {
            m = std::max(m, (layers[i].bias - other.layers[i].bias).cwiseAbs().maxCoeff());
        }
    }
    return m;
}

std::size_t Parameters::count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
    return n;
}

// ---------------------------------------------------------------------------
// State

namespace {

std::vector<std::size_t> layer_widths(const Architecture& arch) {
    if (arch.input_dim == 0) throw ShapeError("input_dim must be positive");
    if (arch.classes < 2) throw ShapeError("classes must be >= 2");
    std::vector<std::size_t> widths{arch.input_dim};
    for (std::size_t h : arch.hidden) {
        if (h == 0) throw ShapeError("hidden width must be positive");
        widths.push_back(h);
    }
    widths.push_back(static_cast<std::size_t>(arch.classes));
    return widths;
}

Parameters zero_parameters(const Architecture& arch) {
    const auto widths = layer_widths(arch);
    Parameters p;
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
        const auto rows = static_cast<Eigen::Index>(widths[i + 1]);
        const auto cols = static_cast<Eigen::Index>(widths[i]);
        p.layers.push_back({Eigen::MatrixXd::Zero(rows, cols), Eigen::VectorXd::Zero(rows)});
    }
    return p;
}

Architecture architecture_of(const Parameters& p) {
    if (p.layers.empty()) throw ShapeError("network has no layers");
    Architecture arch;
    arch.input_dim = static_cast<std::size_t>(p.layers.front().weights.cols());
    for (std::size_t i = 0; i + 1 < p.layers.size(); ++i) {
        arch.hidden.push_back(static_cast<std::size_t>(p.layers[i].weights.rows()));
    }
    arch.classes = static_cast<int>(p.layers.back().weights.rows());
    for (std::size_t i = 1; i < p.layers.size(); ++i) {
        if (p.layers[i].weights.cols() != p.layers[i - 1].weights.rows()) {
            throw ShapeError("consecutive layer shapes do not chain");
        }
    }
    return arch;
}

}  // namespace

ClassifierState::ClassifierState(Architecture arch, std::uint64_t seed)
    : arch_(std::move(arch)), student_(zero_parameters(arch_)) {
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (auto& l : student_.layers) {
        const double stddev = std::sqrt(2.0 / static_cast<double>(l.weights.cols()));
        for (Eigen::Index i = 0; i < l.weights.size(); ++i) l.weights.data()[i] = stddev * normal(rng);
    }
    teacher_ = student_;
}

ClassifierState::ClassifierState(Architecture arch, Parameters student, Parameters teacher)
    : arch_(std::move(arch)), student_(std::move(student)), teacher_(std::move(teacher)) {
    if (!(architecture_of(student_) == arch_) || !student_.same_shape(teacher_)) {
        throw ShapeError("student/teacher parameters do not match the architecture");
    }
}

ClassifierState ClassifierState::zeros(Architecture arch) {
    Parameters p = zero_parameters(arch);
    return ClassifierState(std::move(arch), p, p);
}

// ---------------------------------------------------------------------------
// Forward / backward

Eigen::MatrixXd gather_rows(std::span<const float> features, std::size_t dim,
                            std::span<const std::size_t> rows) {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(dim));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const float* src = features.data() + rows[r] * dim;
        for (std::size_t j = 0; j < dim; ++j) x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = src[j];
    }
    return x;
}

namespace {

struct ForwardCache {
    // activations[0] is the input; pre[l] is layer l's affine output.
    std::vector<Eigen::MatrixXd> activations;
    std::vector<Eigen::MatrixXd> pre;
};

Eigen::MatrixXd run_forward(const Parameters& params, const Eigen::MatrixXd& x, ForwardCache* cache) {
    if (params.layers.empty()) throw ShapeError("network has no layers");
    if (x.cols() != params.layers.front().weights.cols()) {
        throw ShapeError("feature dim " + std::to_string(x.cols()) + " does not match network input " +
                         std::to_string(params.layers.front().weights.cols()));
    }
    Eigen::MatrixXd a = x;
    if (cache) cache->activations.push_back(a);
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        const auto& layer = params.layers[l];
        Eigen::MatrixXd z = a * layer.weights.transpose();
        z.rowwise() += layer.bias.transpose();
        if (l + 1 == params.layers.size()) {
            if (cache) cache->pre.push_back(z);
            return z;
        }
        a = z.cwiseMax(0.0);
        if (cache) {
            cache->pre.push_back(std::move(z));
            cache->activations.push_back(a);
        }
    }
    return a;  // unreachable
}

Parameters run_backward(const Parameters& params, const ForwardCache& cache, Eigen::MatrixXd dz) {
    Parameters grad = params.zeros_like();
    for (std::size_t l = params.layers.size(); l-- > 0;) {
        grad.layers[l].weights = dz.transpose() * cache.activations[l];
        grad.layers[l].bias = dz.colwise().sum().transpose();
        if (l == 0) break;
        Eigen::MatrixXd da = dz * params.layers[l].weights;
        dz = da.cwiseProduct((cache.pre[l - 1].array() > 0.0).cast<double>().matrix());
    }
    return grad;
}

double log_sum_exp(const Eigen::RowVectorXd& z) {
    const double m = z.maxCoeff();
    return m + std::log((z.array() - m).exp().sum());
}

}  // namespace

Eigen::MatrixXd forward(const Parameters& params, const Eigen::MatrixXd& features) {
    return run_forward(params, features, nullptr);
}

Eigen::MatrixXd forward(const ClassifierState& state, const Eigen::MatrixXd& features, Role role) {
    return forward(role == Role::Student ? state.student() : state.teacher(), features);
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
    Eigen::MatrixXd p(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double m = logits.row(i).maxCoeff();
        Eigen::RowVectorXd e = (logits.row(i).array() - m).exp();
        p.row(i) = e / e.sum();
    }
    return p;
}

Eigen::MatrixXd nls_suppress(const Eigen::MatrixXd& logits, std::span<const int> negative, double constant) {
    if (negative.size() != static_cast<std::size_t>(logits.rows())) {
        throw ShapeError("negative label list does not match batch size");
    }
    Eigen::MatrixXd out = logits;
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        const int c = negative[static_cast<std::size_t>(i)];
        if (c < 0) continue;
        if (c >= out.cols()) throw ShapeError("negative class out of range");
        out(i, c) = constant;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Losses

void LossConfig::validate(int classes) const {
    if (!(lambda_consistency >= 0.0)) throw std::invalid_argument("lambda must be >= 0");
    if (!(mu_negative >= 0.0)) throw std::invalid_argument("mu must be >= 0");
    if (!(suppression_constant <= -1e4)) throw std::invalid_argument("suppression constant must be <= -1e4");
    if (!(ema_decay >= 0.0 && ema_decay < 1.0)) throw std::invalid_argument("ema decay must lie in [0,1)");
    if (!class_weights.empty()) {
        if (class_weights.size() != static_cast<std::size_t>(classes)) {
            throw std::invalid_argument("class weight count does not match classes");
        }
        for (double w : class_weights) {
            if (!(w >= 0.0 && w <= 1.0)) throw std::invalid_argument("class weights must lie in [0,1]");
        }
    }
}

void Batch::validate(int classes) const {
    const auto n = size();
    if (n == 0) throw std::invalid_argument("empty batch");
    if (positive.size() != n || negative.size() != n) throw ShapeError("label lists do not match batch size");
    if (teacher_features.size() != 0 &&
        (teacher_features.rows() != features.rows() || teacher_features.cols() != features.cols())) {
        throw ShapeError("teacher features do not match student features");
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (positive[i] >= classes || negative[i] >= classes) throw ShapeError("label out of range");
        if (positive[i] >= 0 && negative[i] >= 0) {
            throw std::invalid_argument("row " + std::to_string(i) + " has both a positive and a negative label");
        }
    }
}

namespace {

double weight_for(const LossConfig& cfg, int label) {
    return cfg.class_weights.empty() ? 1.0 : cfg.class_weights[static_cast<std::size_t>(label)];
}

}  // namespace

LossResult mean_teacher_loss(const ClassifierState& state, const Batch& batch, const LossConfig& cfg) {
    const int classes = state.architecture().classes;
    batch.validate(classes);
    cfg.validate(classes);

    ForwardCache cache;
    const Eigen::MatrixXd logits = run_forward(state.student(), batch.features, &cache);
    const Eigen::MatrixXd probs = softmax_rows(logits);

    const Eigen::MatrixXd& tx = batch.teacher_features.size() == 0 ? batch.features : batch.teacher_features;
    Eigen::MatrixXd teacher_logits = forward(state.teacher(), tx);
    if (cfg.nls_enabled) teacher_logits = nls_suppress(teacher_logits, batch.negative, cfg.suppression_constant);
    const Eigen::MatrixXd target = softmax_rows(teacher_logits);

    LossResult result;
    const auto n = static_cast<Eigen::Index>(batch.size());
    for (Eigen::Index i = 0; i < n; ++i) {
        result.max_normalization_error =
            std::max(result.max_normalization_error, std::abs(target.row(i).sum() - 1.0));
        const int neg = batch.negative[static_cast<std::size_t>(i)];
        if (cfg.nls_enabled && neg >= 0) {
            result.max_suppressed_prob = std::max(result.max_suppressed_prob, target(i, neg));
        }
    }

    Eigen::MatrixXd dz = Eigen::MatrixXd::Zero(n, classes);

    std::size_t labeled = 0;
    for (int y : batch.positive) labeled += y >= 0 ? 1 : 0;
    if (labeled > 0) {
        const double inv = 1.0 / static_cast<double>(labeled);
        for (Eigen::Index i = 0; i < n; ++i) {
            const int y = batch.positive[static_cast<std::size_t>(i)];
            if (y < 0) continue;
            const double w = weight_for(cfg, y);
            result.loss += inv * w * (log_sum_exp(logits.row(i)) - logits(i, y));
            dz.row(i) += inv * w * probs.row(i);
            dz(i, y) -= inv * w;
        }
    }

    if (cfg.lambda_consistency > 0.0) {
        const double scale = cfg.lambda_consistency / static_cast<double>(n);
        const Eigen::MatrixXd diff = probs - target;
        result.loss += scale * diff.squaredNorm();
        for (Eigen::Index i = 0; i < n; ++i) {
            // d/dz of sum_c (p_c - t_c)^2 through the softmax Jacobian.
            const Eigen::RowVectorXd g = 2.0 * scale * diff.row(i);
            const double dot = g.dot(probs.row(i));
            dz.row(i) += (probs.row(i).array() * (g.array() - dot)).matrix();
        }
    }

    result.gradient = run_backward(state.student(), cache, std::move(dz));
    return result;
}

LossResult finetune_loss(const ClassifierState& state, const Batch& batch, const LossConfig& cfg) {
    const int classes = state.architecture().classes;
    batch.validate(classes);
    cfg.validate(classes);

    std::size_t n_pos = 0;
    std::size_t n_neg = 0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        if (batch.positive[i] >= 0) {
            ++n_pos;
        } else if (batch.negative[i] >= 0) {
            ++n_neg;
        } else {
            throw std::invalid_argument("fine-tuning row " + std::to_string(i) + " carries no label");
        }
    }

    ForwardCache cache;
    const Eigen::MatrixXd logits = run_forward(state.student(), batch.features, &cache);
    const Eigen::MatrixXd probs = softmax_rows(logits);
    const auto n = static_cast<Eigen::Index>(batch.size());
    Eigen::MatrixXd dz = Eigen::MatrixXd::Zero(n, classes);

    LossResult result;
    const double inv_pos = n_pos > 0 ? 1.0 / static_cast<double>(n_pos) : 0.0;
    const double inv_neg = n_neg > 0 ? cfg.mu_negative / static_cast<double>(n_neg) : 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const int y = batch.positive[static_cast<std::size_t>(i)];
        if (y >= 0) {
            const double w = weight_for(cfg, y);
            result.loss += inv_pos * w * (log_sum_exp(logits.row(i)) - logits(i, y));
            dz.row(i) += inv_pos * w * probs.row(i);
            dz(i, y) -= inv_pos * w;
            continue;
        }
        const int c = batch.negative[static_cast<std::size_t>(i)];
        const double z = logits(i, c);
        // -log(1 - sigmoid(z)) = softplus(z)
        const double softplus = std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
        const double sigmoid = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
        result.loss += inv_neg * softplus;
        dz(i, c) += inv_neg * sigmoid;
    }

    result.gradient = run_backward(state.student(), cache, std::move(dz));
    return result;
}

std::vector<double> class_weights(std::span<const std::size_t> counts, bool inverse) {
    if (counts.empty()) throw DomainError("class_weights: no classes");
    const std::size_t max = *std::max_element(counts.begin(), counts.end());
    if (max == 0) throw DomainError("class_weights: all counts are zero");
    std::vector<double> w(counts.size());
    if (!inverse) {
        for (std::size_t c = 0; c < counts.size(); ++c) {
            w[c] = static_cast<double>(counts[c]) / static_cast<double>(max);
        }
        return w;
    }
    std::size_t min_nonzero = max;
    for (std::size_t m : counts) {
        if (m > 0) min_nonzero = std::min(min_nonzero, m);
    }
    for (std::size_t c = 0; c < counts.size(); ++c) {
        w[c] = counts[c] == 0 ? 1.0 : static_cast<double>(min_nonzero) / static_cast<double>(counts[c]);
    }
    return w;
}

void ema_update(ClassifierState& state, double decay) {
    if (!(decay >= 0.0 && decay < 1.0)) throw std::invalid_argument("ema decay must lie in [0,1)");
    auto& t = state.teacher();
    const auto& s = state.student();
    for (std::size_t l = 0; l < t.layers.size(); ++l) {
        t.layers[l].weights = decay * t.layers[l].weights + (1.0 - decay) * s.layers[l].weights;
        t.layers[l].bias = decay * t.layers[l].bias + (1.0 - decay) * s.layers[l].bias;
    }
}

void sgd_step(ClassifierState& state, const Parameters& gradient, double lr, double weight_decay,
              std::size_t batch_index) {
    if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be > 0");
    if (!gradient.all_finite()) throw TrainingError("non-finite gradient", batch_index);
    auto& s = state.student();
    if (!s.same_shape(gradient)) throw ShapeError("gradient shape does not match parameters");
    for (std::size_t l = 0; l < s.layers.size(); ++l) {
        s.layers[l].weights -= lr * (gradient.layers[l].weights + weight_decay * s.layers[l].weights);
        s.layers[l].bias -= lr * (gradient.layers[l].bias + weight_decay * s.layers[l].bias);
    }
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

void write_parameters(detail::ByteWriter& w, const Parameters& p) {
    for (const auto& l : p.layers) {
        for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
            for (Eigen::Index c = 0; c < l.weights.cols(); ++c) w.f32(static_cast<float>(l.weights(r, c)));
        }
        for (Eigen::Index r = 0; r < l.bias.size(); ++r) w.f32(static_cast<float>(l.bias(r)));
    }
}

void read_parameters(detail::ByteReader& in, Parameters& p) {
    for (auto& l : p.layers) {
        for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
            for (Eigen::Index c = 0; c < l.weights.cols(); ++c) l.weights(r, c) = in.f32("weight");
        }
        for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias(r) = in.f32("bias");
    }
}

}  // namespace

void save_checkpoint(const ClassifierState& state, const std::filesystem::path& path) {
    detail::ByteWriter w;
    w.magic("OBCK");
    const auto& layers = state.student().layers;
    w.u32(static_cast<std::uint32_t>(layers.size()));
    for (const auto& l : layers) {
        w.u32(static_cast<std::uint32_t>(l.weights.rows()));
        w.u32(static_cast<std::uint32_t>(l.weights.cols()));
    }
    write_parameters(w, state.student());
    write_parameters(w, state.teacher());
    detail::write_file(path, std::move(w).take());
}

ClassifierState load_checkpoint(const std::filesystem::path& path) {
    const auto bytes = detail::read_file(path);
    detail::ByteReader in(bytes);
    in.expect_magic("OBCK");
    const std::uint32_t count = in.u32("layer count");
    if (count == 0 || count > 64) throw FormatError("implausible layer count", 4);
    Parameters p;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::size_t at = in.offset();
        const std::uint32_t rows = in.u32("rows");
        const std::uint32_t cols = in.u32("cols");
        if (rows == 0 || cols == 0) throw FormatError("empty layer shape", at);
        p.layers.push_back({Eigen::MatrixXd::Zero(rows, cols), Eigen::VectorXd::Zero(rows)});
    }
    Architecture arch;
    try {
        arch = architecture_of(p);
    } catch (const ShapeError& e) {
        throw CheckpointError(std::string("checkpoint layers inconsistent: ") + e.what());
    }
    Parameters teacher = p;
    read_parameters(in, p);
    read_parameters(in, teacher);
    if (!in.at_end()) throw FormatError("trailing bytes after parameters", in.offset());
    return ClassifierState(std::move(arch), std::move(p), std::move(teacher));
}

ClassifierState load_checkpoint(const std::filesystem::path& path, const Architecture& expected) {
    ClassifierState state = load_checkpoint(path);
    if (!(state.architecture() == expected)) {
        throw CheckpointError("checkpoint architecture does not match the configured network (" + path.string() +
                              ")");
    }
    return state;
}

}  // namespace onebit
