#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "onebit/errors.hpp"
#include "onebit/model.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace onebit;

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> g(0.0, scale);
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
    return m;
}

// Random student/teacher pair with nonzero biases so no ReLU sits exactly on
// its kink.
ClassifierState random_state(const Architecture& arch, std::mt19937_64& rng) {
    ClassifierState s(arch, rng());
    std::normal_distribution<double> g(0.0, 0.3);
    s.student().for_each([&](double& v) { v += g(rng); });
    s.teacher().for_each([&](double& v) { v += g(rng); });
    return s;
}

Batch random_batch(std::size_t n, std::size_t dim, int classes, std::mt19937_64& rng, bool all_labeled) {
    Batch b;
    b.features = random_matrix(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim), rng);
    b.teacher_features = b.features + random_matrix(b.features.rows(), b.features.cols(), rng, 0.1);
    for (std::size_t i = 0; i < n; ++i) {
        const auto kind = all_labeled ? rng() % 2 : rng() % 3;
        const int c = static_cast<int>(rng() % static_cast<unsigned>(classes));
        b.positive.push_back(kind == 0 ? c : -1);
        b.negative.push_back(kind == 1 ? c : -1);
    }
    return b;
}

Architecture arch(std::size_t d, std::vector<std::size_t> h, int c) { return Architecture{d, std::move(h), c}; }

}  // namespace

TEST(Forward, ZeroWeightsGiveZeroLogits) {
    const auto s = ClassifierState::zeros(arch(3, {4}, 5));
    const Eigen::MatrixXd x = Eigen::MatrixXd::Ones(2, 3);
    EXPECT_EQ(forward(s, x, Role::Student), Eigen::MatrixXd::Zero(2, 5));
}

TEST(Forward, HandComputedTwoDimensionalNet) {
    // hidden = relu(I x + [0, -1]); logits = [[1, 1], [1, -1]] h + [0.5, 0]
    auto s = ClassifierState::zeros(arch(2, {2}, 2));
    auto& p = s.student();
    p.layers[0].weights = Eigen::Matrix2d::Identity();
    p.layers[0].bias = Eigen::Vector2d(0.0, -1.0);
    p.layers[1].weights << 1.0, 1.0, 1.0, -1.0;
    p.layers[1].bias = Eigen::Vector2d(0.5, 0.0);
    Eigen::MatrixXd x(2, 2);
    x << 2.0, 3.0,   // h = [2, 2] -> [4.5, 0]
        -1.0, 0.5;   // h = [0, 0] -> [0.5, 0]
    const Eigen::MatrixXd z = forward(p, x);
    EXPECT_DOUBLE_EQ(z(0, 0), 4.5);
    EXPECT_DOUBLE_EQ(z(0, 1), 0.0);
    EXPECT_DOUBLE_EQ(z(1, 0), 0.5);
    EXPECT_DOUBLE_EQ(z(1, 1), 0.0);
}

TEST(Forward, MatchesScalarOracle) {
    std::mt19937_64 rng(2);
    const auto s = random_state(arch(5, {7, 6}, 4), rng);
    const Eigen::MatrixXd x = random_matrix(9, 5, rng);
    const Eigen::MatrixXd z = forward(s.student(), x);
    const auto net = oracle::to_net(s.student());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const auto expected = oracle::forward(net, oracle::row(x, i));
        for (Eigen::Index c = 0; c < 4; ++c) EXPECT_NEAR(z(i, c), expected[static_cast<std::size_t>(c)], 1e-12);
    }
}

TEST(Forward, StudentEqualsTeacherAfterInit) {
    const ClassifierState s(arch(4, {8}, 3), 42);
    const Eigen::MatrixXd x = Eigen::MatrixXd::Random(6, 4);
    EXPECT_EQ(forward(s, x, Role::Student), forward(s, x, Role::Teacher));
}

TEST(Forward, ShapeMismatchThrows) {
    const ClassifierState s(arch(4, {8}, 3), 42);
    EXPECT_THROW(forward(s, Eigen::MatrixXd::Zero(2, 5), Role::Student), ShapeError);
}

TEST(Softmax, RowsSumToOne) {
    std::mt19937_64 rng(8);
    const Eigen::MatrixXd p = softmax_rows(random_matrix(50, 7, rng, 30.0));
    for (Eigen::Index i = 0; i < p.rows(); ++i) EXPECT_NEAR(p.row(i).sum(), 1.0, 1e-9);
}

TEST(Nls, SuppressesOnlyTheNegativeClass) {
    Eigen::MatrixXd z(1, 3);
    z << 2.0, 1.0, 0.0;
    const std::vector<int> neg{1};
    const Eigen::MatrixXd s = nls_suppress(z, neg);
    EXPECT_EQ(s(0, 0), 2.0);
    EXPECT_EQ(s(0, 1), -1e4);
    EXPECT_EQ(s(0, 2), 0.0);
    const Eigen::MatrixXd p = softmax_rows(s);
    const auto expected = oracle::softmax({2.0, -1e4, 0.0});
    EXPECT_NEAR(p(0, 0), 0.880797078, 1e-9);
    EXPECT_NEAR(p(0, 2), 0.119202922, 1e-9);
    EXPECT_NEAR(p(0, 0), expected[0], 1e-15);
    EXPECT_LT(p(0, 1), 1e-6);
    EXPECT_NEAR(p.row(0).sum(), 1.0, 1e-9);
}

TEST(Nls, RowsWithoutNegativeUnchangedAndIdempotent) {
    std::mt19937_64 rng(1);
    const Eigen::MatrixXd z = random_matrix(4, 5, rng);
    const std::vector<int> neg{-1, 3, -1, 0};
    const Eigen::MatrixXd once = nls_suppress(z, neg);
    EXPECT_EQ(once.row(0), z.row(0));
    EXPECT_EQ(once.row(2), z.row(2));
    EXPECT_EQ(nls_suppress(once, neg), once);
    EXPECT_EQ(softmax_rows(nls_suppress(once, neg)), softmax_rows(once));
}

TEST(Nls, SuppressedProbabilityVanishesForLargeLogits) {
    std::mt19937_64 rng(6);
    const Eigen::MatrixXd z = random_matrix(200, 10, rng, 20.0);
    std::vector<int> neg(200);
    for (int& c : neg) c = static_cast<int>(rng() % 10);
    const Eigen::MatrixXd p = softmax_rows(nls_suppress(z, neg));
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        EXPECT_LT(p(i, neg[static_cast<std::size_t>(i)]), 1e-6);
        EXPECT_NEAR(p.row(i).sum(), 1.0, 1e-9);
    }
}

TEST(MeanTeacherLoss, LambdaZeroIsCrossEntropy) {
    std::mt19937_64 rng(3);
    const auto s = random_state(arch(4, {6}, 3), rng);
    Batch b;
    b.features = random_matrix(5, 4, rng);
    b.positive = {0, 1, 2, 0, 1};
    b.negative.assign(5, -1);
    LossConfig cfg;
    cfg.lambda_consistency = 0.0;
    const auto r = mean_teacher_loss(s, b, cfg);
    const auto net = oracle::to_net(s.student());
    double ce = 0.0;
    for (Eigen::Index i = 0; i < 5; ++i) {
        ce -= std::log(oracle::softmax(oracle::forward(net, oracle::row(b.features, i)))[static_cast<std::size_t>(b.positive[static_cast<std::size_t>(i)])]);
    }
    EXPECT_NEAR(r.loss, ce / 5.0, 1e-12);
}

TEST(MeanTeacherLoss, IdenticalTeacherUnlabeledRowsGiveZero) {
    const ClassifierState s(arch(4, {6}, 3), 9);
    Batch b;
    b.features = Eigen::MatrixXd::Random(5, 4);
    b.positive.assign(5, -1);
    b.negative.assign(5, -1);
    const auto r = mean_teacher_loss(s, b, LossConfig{});
    EXPECT_EQ(r.loss, 0.0);
    EXPECT_EQ(r.gradient.max_abs_diff(r.gradient.zeros_like()), 0.0);
}

TEST(MeanTeacherLoss, EmptyBatchThrows) {
    const ClassifierState s(arch(4, {6}, 3), 9);
    Batch b;
    b.features = Eigen::MatrixXd::Zero(0, 4);
    EXPECT_THROW(mean_teacher_loss(s, b, LossConfig{}), std::invalid_argument);
}

TEST(MeanTeacherLoss, RowWithBothLabelsRejected) {
    const ClassifierState s(arch(2, {3}, 3), 9);
    Batch b;
    b.features = Eigen::MatrixXd::Zero(1, 2);
    b.positive = {1};
    b.negative = {2};
    EXPECT_THROW(mean_teacher_loss(s, b, LossConfig{}), std::invalid_argument);
}

TEST(MeanTeacherLoss, MatchesScalarOracle) {
    std::mt19937_64 rng(12);
    for (int t = 0; t < 5; ++t) {
        const auto s = random_state(arch(4, {5}, 4), rng);
        const Batch b = random_batch(8, 4, 4, rng, false);
        LossConfig cfg;
        cfg.lambda_consistency = 2.5;
        cfg.class_weights = {0.5, 1.0, 0.25, 0.75};
        EXPECT_NEAR(mean_teacher_loss(s, b, cfg).loss, oracle::mean_teacher_loss(s.student(), s.teacher(), b, cfg),
                    1e-12);
    }
}

TEST(MeanTeacherLoss, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(21);
    for (int t = 0; t < 10; ++t) {
        const auto a = arch(3 + rng() % 4, {4 + rng() % 5}, 3 + static_cast<int>(rng() % 4));
        const auto s = random_state(a, rng);
        const Batch b = random_batch(8, a.input_dim, a.classes, rng, false);
        LossConfig cfg;
        cfg.lambda_consistency = 1.5;
        const auto r = mean_teacher_loss(s, b, cfg);
        const double err = oracle::gradient_check(r.gradient, s.student(), [&](const Parameters& p) {
            return oracle::mean_teacher_loss(p, s.teacher(), b, cfg);
        });
        EXPECT_LT(err, 1e-4) << "trial " << t;
    }
}

TEST(MeanTeacherLoss, ReportsSuppressionDiagnostics) {
    std::mt19937_64 rng(4);
    const auto s = random_state(arch(3, {4}, 3), rng);
    Batch b;
    b.features = random_matrix(3, 3, rng);
    b.positive = {-1, -1, 0};
    b.negative = {2, 1, -1};
    const auto r = mean_teacher_loss(s, b, LossConfig{});
    EXPECT_LT(r.max_suppressed_prob, 1e-6);
    EXPECT_LT(r.max_normalization_error, 1e-9);
}

TEST(FinetuneLoss, MuZeroIsWeightedCrossEntropy) {
    std::mt19937_64 rng(7);
    const auto s = random_state(arch(4, {6}, 3), rng);
    const Batch b = random_batch(6, 4, 3, rng, true);
    LossConfig cfg;
    cfg.mu_negative = 0.0;
    EXPECT_NEAR(finetune_loss(s, b, cfg).loss, oracle::finetune_loss(s.student(), b, cfg), 1e-12);
}

TEST(FinetuneLoss, NegativeRowAtZeroLogitIsLogTwo) {
    auto s = ClassifierState::zeros(arch(2, {2}, 3));
    Batch b;
    b.features = Eigen::MatrixXd::Ones(1, 2);
    b.positive = {-1};
    b.negative = {1};
    LossConfig cfg;
    cfg.mu_negative = 1.0;
    EXPECT_NEAR(finetune_loss(s, b, cfg).loss, 0.6931471805599453, 1e-15);
}

TEST(FinetuneLoss, UnlabeledRowIsContractViolation) {
    const ClassifierState s(arch(2, {2}, 3), 1);
    Batch b;
    b.features = Eigen::MatrixXd::Ones(2, 2);
    b.positive = {0, -1};
    b.negative = {-1, -1};
    EXPECT_THROW(finetune_loss(s, b, LossConfig{}), std::invalid_argument);
}

TEST(FinetuneLoss, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(31);
    for (int t = 0; t < 10; ++t) {
        const auto a = arch(3 + rng() % 4, {4 + rng() % 5, 3 + rng() % 3}, 3 + static_cast<int>(rng() % 4));
        const auto s = random_state(a, rng);
        const Batch b = random_batch(8, a.input_dim, a.classes, rng, true);
        LossConfig cfg;
        cfg.mu_negative = 0.7;
        cfg.class_weights.assign(static_cast<std::size_t>(a.classes), 0.6);
        const auto r = finetune_loss(s, b, cfg);
        EXPECT_NEAR(r.loss, oracle::finetune_loss(s.student(), b, cfg), 1e-12);
        const double err = oracle::gradient_check(
            r.gradient, s.student(), [&](const Parameters& p) { return oracle::finetune_loss(p, b, cfg); });
        EXPECT_LT(err, 1e-4) << "trial " << t;
    }
}

TEST(ClassWeights, AsPrinted) {
    const std::vector<std::size_t> balanced{10, 10, 10};
    EXPECT_EQ(class_weights(balanced), (std::vector<double>{1, 1, 1}));
    const std::vector<std::size_t> skew{5, 10};
    EXPECT_EQ(class_weights(skew), (std::vector<double>{0.5, 1.0}));
    const std::vector<std::size_t> empty_class{0, 4};
    EXPECT_EQ(class_weights(empty_class), (std::vector<double>{0.0, 1.0}));
}

TEST(ClassWeights, InverseUpWeightsMinority) {
    const std::vector<std::size_t> skew{5, 10, 0};
    EXPECT_EQ(class_weights(skew, true), (std::vector<double>{1.0, 0.5, 1.0}));
}

TEST(ClassWeights, AllZeroThrows) {
    const std::vector<std::size_t> zero{0, 0};
    EXPECT_THROW(class_weights(zero), DomainError);
}

TEST(Ema, DecayZeroCopiesStudent) {
    std::mt19937_64 rng(1);
    auto s = random_state(arch(3, {4}, 2), rng);
    ema_update(s, 0.0);
    EXPECT_EQ(s.teacher().max_abs_diff(s.student()), 0.0);
}

TEST(Ema, ExactAffineCombination) {
    std::mt19937_64 rng(1);
    auto s = random_state(arch(3, {4}, 2), rng);
    const Parameters old_teacher = s.teacher();
    ema_update(s, 0.9);
    Parameters expected = old_teacher;
    expected.scale(0.9);
    expected.add_scaled(s.student(), 1.0 - 0.9);
    EXPECT_EQ(s.teacher().max_abs_diff(expected), 0.0);
    EXPECT_TRUE(s.teacher().same_shape(s.student()));
}

TEST(Ema, GeometricConvergence) {
    std::mt19937_64 rng(1);
    auto s = random_state(arch(3, {4}, 2), rng);
    const double gap0 = s.teacher().max_abs_diff(s.student());
    for (int k = 0; k < 50; ++k) ema_update(s, 0.99);
    EXPECT_NEAR(s.teacher().max_abs_diff(s.student()), gap0 * std::pow(0.99, 50), 1e-12);
}

TEST(Ema, RejectsDecayOutsideUnitInterval) {
    auto s = ClassifierState::zeros(arch(2, {2}, 2));
    EXPECT_THROW(ema_update(s, 1.0), std::invalid_argument);
    EXPECT_THROW(ema_update(s, -0.1), std::invalid_argument);
}

TEST(Sgd, ZeroGradientNoDecayLeavesParameters) {
    ClassifierState s(arch(3, {4}, 2), 5);
    const Parameters before = s.student();
    sgd_step(s, before.zeros_like(), 0.1, 0.0);
    EXPECT_EQ(s.student().max_abs_diff(before), 0.0);
}

TEST(Sgd, WeightDecayShrinks) {
    ClassifierState s(arch(3, {4}, 2), 5);
    Parameters expected = s.student();
    expected.scale(1.0 - 0.5 * 0.1);
    sgd_step(s, s.student().zeros_like(), 0.5, 0.1);
    EXPECT_LT(s.student().max_abs_diff(expected), 1e-15);
}

TEST(Sgd, QuadraticTrajectoryMatchesClosedForm) {
    // Loss 0.5 * a * ||theta||^2 has gradient a * theta, so each step scales
    // theta by (1 - lr * a).
    ClassifierState s(arch(2, {2}, 2), 3);
    const Parameters start = s.student();
    const double a = 3.0;
    const double lr = 0.05;
    for (int k = 0; k < 20; ++k) {
        Parameters g = s.student();
        g.scale(a);
        sgd_step(s, g, lr, 0.0);
    }
    Parameters expected = start;
    expected.scale(std::pow(1.0 - lr * a, 20));
    EXPECT_LT(s.student().max_abs_diff(expected), 1e-12);
}

TEST(Sgd, NonFiniteGradientCarriesBatchIndex) {
    ClassifierState s(arch(2, {2}, 2), 3);
    Parameters g = s.student().zeros_like();
    g.layers[0].weights(0, 0) = NAN;
    try {
        sgd_step(s, g, 0.1, 0.0, 17);
        FAIL() << "expected TrainingError";
    } catch (const TrainingError& e) {
        EXPECT_EQ(e.batch_index(), 17u);
    }
}

TEST(Training, SeparableToyReachesLowCrossEntropy) {
    std::mt19937_64 rng(0);
    const int classes = 3;
    Batch b;
    b.features.resize(60, 2);
    const double centers[3][2] = {{4, 0}, {-4, 0}, {0, 4}};
    std::normal_distribution<double> g(0.0, 0.3);
    for (int i = 0; i < 60; ++i) {
        const int c = i % classes;
        b.features(i, 0) = centers[c][0] + g(rng);
        b.features(i, 1) = centers[c][1] + g(rng);
        b.positive.push_back(c);
        b.negative.push_back(-1);
    }
    ClassifierState s(arch(2, {16}, classes), 1);
    LossConfig cfg;
    cfg.lambda_consistency = 0.0;
    double loss = 0.0;
    for (int step = 0; step < 200; ++step) {
        const auto r = mean_teacher_loss(s, b, cfg);
        loss = r.loss;
        sgd_step(s, r.gradient, 0.1, 0.0, static_cast<std::size_t>(step));
    }
    EXPECT_LT(mean_teacher_loss(s, b, cfg).loss, 0.05) << "last step loss " << loss;
}

TEST(Checkpoint, RoundTripAfterFloatRounding) {
    TempDir tmp;
    std::mt19937_64 rng(5);
    const auto s = random_state(arch(3, {5, 4}, 2), rng);
    save_checkpoint(s, tmp / "a.ck");
    const auto loaded = load_checkpoint(tmp / "a.ck");
    EXPECT_EQ(loaded.architecture(), s.architecture());
    EXPECT_LT(loaded.student().max_abs_diff(s.student()), 1e-6);
    EXPECT_GT(loaded.teacher().max_abs_diff(s.student()), 0.0);
    // Parameters are stored as float32: a second round trip is exact.
    save_checkpoint(loaded, tmp / "b.ck");
    EXPECT_EQ(slurp(tmp / "a.ck"), slurp(tmp / "b.ck"));
    const auto again = load_checkpoint(tmp / "b.ck");
    EXPECT_EQ(again.student().max_abs_diff(loaded.student()), 0.0);
    EXPECT_EQ(again.teacher().max_abs_diff(loaded.teacher()), 0.0);
}

TEST(Checkpoint, ByteLayout) {
    TempDir tmp;
    auto s = ClassifierState::zeros(arch(2, {3}, 2));
    save_checkpoint(s, tmp / "z.ck");
    const std::string bytes = slurp(tmp / "z.ck");
    // magic + count + 2 * (rows, cols) + 2 copies * (3*2+3 + 2*3+2) floats
    EXPECT_EQ(bytes.size(), 4u + 4u + 16u + 2u * 17u * 4u);
    EXPECT_EQ(bytes.substr(0, 4), "OBCK");
    EXPECT_EQ(bytes[4], 2);
    EXPECT_EQ(bytes[8], 3);   // first layer rows
    EXPECT_EQ(bytes[12], 2);  // first layer cols
}

TEST(Checkpoint, MismatchedArchitectureThrows) {
    TempDir tmp;
    save_checkpoint(ClassifierState(arch(3, {4}, 2), 1), tmp / "a.ck");
    EXPECT_THROW(load_checkpoint(tmp / "a.ck", arch(4, {4}, 2)), CheckpointError);
    EXPECT_NO_THROW(load_checkpoint(tmp / "a.ck", arch(3, {4}, 2)));
}

TEST(Checkpoint, CorruptFileThrows) {
    TempDir tmp;
    {
        std::ofstream out(tmp / "bad.ck", std::ios::binary);
        out << "OBCKxx";
    }
    EXPECT_THROW(load_checkpoint(tmp / "bad.ck"), std::runtime_error);
}
