#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace onebit {

struct Architecture {
    std::size_t input_dim = 0;
    std::vector<std::size_t> hidden;
    int classes = 0;

    bool operator==(const Architecture&) const = default;
};

/// Affine layer y = W x + b with W stored as (outputs x inputs).
struct DenseLayer {
    Eigen::MatrixXd weights;
    Eigen::VectorXd bias;
};

/// One full set of network parameters. Gradients share this shape.
struct Parameters {
    std::vector<DenseLayer> layers;

    Parameters zeros_like() const;
    /// this += alpha * other
    void add_scaled(const Parameters& other, double alpha);
    void scale(double factor);
    bool all_finite() const;
    double max_abs_diff(const Parameters& other) const;
    std::size_t count() const;
    /// Visits every scalar in a fixed order (layer, weights col-major, bias).
    template <class Fn>
    void for_each(Fn&& fn) {
        for (auto& l : layers) {
            for (Eigen::Index i = 0; i < l.weights.size(); ++i) fn(l.weights.data()[i]);
            for (Eigen::Index i = 0; i < l.bias.size(); ++i) fn(l.bias.data()[i]);
        }
    }
    bool same_shape(const Parameters& other) const;
};

/// Student parameters and their exponential moving average (the teacher).
class ClassifierState {
public:
    /// He-normal weights, zero biases; teacher copied from student.
    ClassifierState(Architecture arch, std::uint64_t seed);
    ClassifierState(Architecture arch, Parameters student, Parameters teacher);
    static ClassifierState zeros(Architecture arch);

    const Architecture& architecture() const noexcept { return arch_; }
    Parameters& student() noexcept { return student_; }
    const Parameters& student() const noexcept { return student_; }
    Parameters& teacher() noexcept { return teacher_; }
    const Parameters& teacher() const noexcept { return teacher_; }

private:
    Architecture arch_;
    Parameters student_;
    Parameters teacher_;
};

enum class Role { Student, Teacher };

/// Row-major float features -> double matrix (rows x dim) for the given rows.
Eigen::MatrixXd gather_rows(std::span<const float> features, std::size_t dim,
                            std::span<const std::size_t> rows);

/// affine -> ReLU -> ... -> affine. Returns B x C logits.
Eigen::MatrixXd forward(const Parameters& params, const Eigen::MatrixXd& features);
Eigen::MatrixXd forward(const ClassifierState& state, const Eigen::MatrixXd& features, Role role);

/// Row-wise numerically stable softmax.
Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits);

inline constexpr double kDefaultSuppression = -1e4;

/// Replaces logit (i, negative[i]) with `constant` for every row carrying a
/// negative class (negative[i] >= 0). Other entries are left untouched.
Eigen::MatrixXd nls_suppress(const Eigen::MatrixXd& logits, std::span<const int> negative,
                             double constant = kDefaultSuppression);

struct LossConfig {
    double lambda_consistency = 1.0;
    double mu_negative = 0.1;
    /// Per-class weights for the labeled cross-entropy; empty means all 1.
    std::vector<double> class_weights;
    bool nls_enabled = true;
    double suppression_constant = kDefaultSuppression;
    double ema_decay = 0.99;

    void validate(int classes) const;
};

/// A minibatch. `positive[i]` / `negative[i]` are class ids or -1. A row has
/// at most one of them. When `teacher_features` is empty the teacher sees
/// `features`.
struct Batch {
    Eigen::MatrixXd features;
    Eigen::MatrixXd teacher_features;
    std::vector<int> positive;
    std::vector<int> negative;

    std::size_t size() const noexcept { return static_cast<std::size_t>(features.rows()); }
    /// 1 iff the row has an accurate label.
    int binary_flag(std::size_t i) const { return positive.at(i) >= 0 ? 1 : 0; }
    void validate(int classes) const;
};

struct LossResult {
    double loss = 0.0;
    Parameters gradient;
    /// Largest teacher probability left on a suppressed negative class.
    double max_suppressed_prob = 0.0;
    /// Largest |sum(p) - 1| over teacher rows.
    double max_normalization_error = 0.0;
};

/// mean over labeled rows of w_y * CE(y, softmax(student))
///   + lambda * mean over all rows of ||softmax(student) - softmax(teacher)||^2
/// Teacher logits of rows with a negative class are suppressed when NLS is
/// enabled. Gradients are with respect to the student only.
LossResult mean_teacher_loss(const ClassifierState& state, const Batch& batch, const LossConfig& cfg);

/// mean over positive rows of w_y * CE(y, softmax(student))
///   + mu * mean over negative rows of -log(1 - sigmoid(z_neg))
/// where z_neg is the student logit of the stored negative class. Every row
/// must carry a label.
LossResult finetune_loss(const ClassifierState& state, const Batch& batch, const LossConfig& cfg);

/// w_c = m_c / max(m). With `inverse`, w_c = min_{m>0}(m) / m_c instead (the
/// usual minority up-weighting; empty classes get weight 1).
std::vector<double> class_weights(std::span<const std::size_t> counts, bool inverse = false);

/// teacher <- decay * teacher + (1 - decay) * student
void ema_update(ClassifierState& state, double decay);

/// student <- student - lr * (grad + weight_decay * student). Throws
/// TrainingError tagged with `batch_index` on non-finite gradients.
void sgd_step(ClassifierState& state, const Parameters& gradient, double lr, double weight_decay,
              std::size_t batch_index = 0);

/// "OBCK", u32 layer count, per layer u32 rows and u32 cols, then float32
/// student parameters followed by float32 teacher parameters. Each layer
/// contributes its row-major weights followed by its `rows` biases.
void save_checkpoint(const ClassifierState& state, const std::filesystem::path& path);
ClassifierState load_checkpoint(const std::filesystem::path& path);
/// Loads and checks the stored shapes against `expected`.
ClassifierState load_checkpoint(const std::filesystem::path& path, const Architecture& expected);

}  // namespace onebit
