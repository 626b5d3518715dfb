#include "support.hpp"

#include <adaptmenu/value_net.hpp>
#include <adaptmenu/workload.hpp>

#include <gtest/gtest.h>

#include <sstream>

using namespace adaptmenu;
using testsupport::id;
using testsupport::menu;
using testsupport::reorder;

namespace {

InteractionState workload_state(int n, std::uint64_t seed)
{
    Rng rng(seed);
    const auto d = random_design(n, rng);
    auto log = zipf_history(d, 1.5, 60, rng);
    return make_state(d, user_from_history(std::move(log), 20, d.catalog().size()));
}

NetShape tiny_shape() { return NetShape{{4, 3, 2}, 5, 6, 4}; }

std::string bytes(const Dataset& d)
{
    std::ostringstream out;
    save_dataset(out, d);
    return out.str();
}

}  // namespace

TEST(Encode, FixedLengthAndOneHotRows)
{
    const auto s = workload_state(12, 1);
    const auto f = encode(s, s.design);
    EXPECT_EQ(f.flatten().size(), static_cast<std::size_t>(kEncodingLength));
    for (int r = 0; r < kMaxRows; ++r) {
        float sum = 0;
        for (int t = 0; t < kTokens; ++t) {
            sum += f.menu_onehot[static_cast<std::size_t>(r * kTokens + t)];
        }
        EXPECT_EQ(sum, 1.0f);
    }
    EXPECT_EQ(encode(workload_state(3, 2), workload_state(3, 2).design).flatten().size(),
              static_cast<std::size_t>(kEncodingLength));
}

TEST(Encode, IdenticalDesignsHaveNoAssociationChange)
{
    const auto s = workload_state(9, 3);
    for (float v : encode(s, s.design).assoc_diff) {
        EXPECT_EQ(v, 0.0f);
    }
}

TEST(Encode, EmptyHistoryHasNoPreviousClicks)
{
    const auto d = menu({"a", "b", "c"});
    const auto s = make_state(d, testsupport::user_with_interest(d, {{"a", 1.0}}));
    for (float v : encode(s, d).clicks_prev) {
        EXPECT_EQ(v, 0.0f);
    }
}

TEST(Encode, SwapPermutesTwoRows)
{
    const auto d = menu({"a", "b", "c"});
    const auto s = make_state(d, testsupport::user_with_interest(d, {{"a", 1.0}}));
    const auto before = encode(s, d).menu_onehot;
    const auto after = encode(s, reorder(d, {"c", "b", "a"})).menu_onehot;
    auto row = [](const std::vector<float>& v, int r) {
        return std::vector<float>(v.begin() + r * kTokens, v.begin() + (r + 1) * kTokens);
    };
    std::vector<int> changed;
    for (int r = 0; r < kMaxRows; ++r) {
        if (row(before, r) != row(after, r)) {
            changed.push_back(r);
        }
    }
    ASSERT_EQ(changed, (std::vector<int>{0, 2}));
    EXPECT_EQ(row(before, 0), row(after, 2));
    EXPECT_EQ(row(before, 2), row(after, 0));
}

TEST(Encode, OverCapacityThrows)
{
    std::vector<std::string> names;
    for (int i = 0; i < kMaxItems + 1; ++i) {
        names.push_back("x" + std::to_string(i));
    }
    const auto d = menu(names);
    const auto s = make_state(d, testsupport::user_with_interest(d, {{"x0", 1.0}}));
    EXPECT_THROW(encode(s, d), std::invalid_argument);
}

TEST(EncodeProperty, DistinctDesignsDistinctEncodings)
{
    Rng rng(51);
    RecordProperty("cases", testsupport::kCases);
    for (int trial = 0; trial < testsupport::kCases; ++trial) {
        const auto s = workload_state(2 + static_cast<int>(rng.index(14)), rng.next());
        const auto cs = enumerate_candidates(s.design);
        const auto i = rng.index(cs.size());
        auto j = rng.index(cs.size() - 1);
        j += j >= i ? 1 : 0;
        const auto a = encode(s, cs[i].design).flatten();
        const auto b = encode(s, cs[j].design).flatten();
        ASSERT_NE(a, b);
        ASSERT_EQ(a, encode(s, cs[i].design).flatten());
    }
}

TEST(Network, ZeroWeightsPredictBiases)
{
    ValueNetwork<float> net(tiny_shape());
    for (auto& l : net.layers()) {
        l.w.setZero();
        l.b.setZero();
    }
    for (int t = 0; t < 3; ++t) {
        net.layers()[static_cast<std::size_t>(ValueNetwork<float>::tail_layer(t, 2))].b(0) = static_cast<float>(t + 1);
    }
    const std::vector<float> x(9, 0.5f);
    const auto v = net.predict(x);
    EXPECT_EQ(v, (RewardVector{1, 2, 3}));
    EXPECT_EQ(net.predict(x), v);
    EXPECT_THROW(net.predict(std::vector<float>(8, 0.0f)), std::invalid_argument);
}

TEST(Network, GradientMatchesFiniteDifferences)
{
    Rng rng(3);
    ValueNetwork<double> net(tiny_shape());
    net.initialize(rng);
    for (auto& l : net.layers()) {
        for (Eigen::Index k = 0; k < l.b.size(); ++k) {
            l.b(k) = 0.1 * (rng.uniform() - 0.3);
        }
    }
    Eigen::MatrixXd x(9, 10), y(3, 10);
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        x.data()[i] = 2 * rng.uniform() - 1;
    }
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        y.data()[i] = 2 * rng.uniform() - 1;
    }
    EXPECT_LT(gradient_check(net, x, y), 1e-4);
}

TEST(Network, InferenceIsDropoutFree)
{
    Rng rng(4);
    ValueNetwork<float> net(tiny_shape());
    net.initialize(rng);
    Eigen::MatrixXf x = Eigen::MatrixXf::Random(9, 5);
    const Eigen::MatrixXf a = net.forward(x);
    const Eigen::MatrixXf b = net.forward(x);
    EXPECT_EQ(a, b);
    Rng drop(1);
    const Eigen::MatrixXf c = net.forward(x, nullptr, &drop, 0.5f);
    EXPECT_NE(a, c);
}

TEST(Train, ConstantTargetsLearnTheBias)
{
    Rng rng(5);
    Dataset d;
    d.encoding_length = 9;
    for (int i = 0; i < 300; ++i) {
        std::vector<float> x(9);
        for (float& v : x) {
            v = static_cast<float>(rng.uniform());
        }
        d.append(x, RewardVector{5, -3, 2});
    }
    TrainConfig c;
    c.shape = tiny_shape();
    c.learning_rate = 0.01;
    c.max_epochs = 150;
    c.patience = 150;
    TrainReport report;
    const auto m = train(d, c, &report);
    for (double mse : report.validation_mse) {
        EXPECT_LT(mse, 1e-3);
    }
    const auto v = m.network.predict(d.x(0));
    // Within the validation MSE bound above.
    EXPECT_NEAR(v.serial, 5, 0.032);
    EXPECT_NEAR(v.forage, -3, 0.032);
    EXPECT_NEAR(v.recall, 2, 0.032);
}

TEST(Train, CheckpointsImproveAndBestWeightsKept)
{
    Rng rng(6);
    Dataset d;
    d.encoding_length = 9;
    for (int i = 0; i < 400; ++i) {
        std::vector<float> x(9);
        for (float& v : x) {
            v = static_cast<float>(2 * rng.uniform() - 1);
        }
        d.append(x, RewardVector{x[0] + x[4], x[1] * x[2], x[7] - x[8]});
    }
    TrainConfig c;
    c.shape = tiny_shape();
    c.max_epochs = 40;
    c.patience = 5;
    TrainReport report;
    const auto m = train(d, c, &report);
    double last = std::numeric_limits<double>::infinity();
    for (const auto& e : report.curve) {
        if (e.checkpoint) {
            EXPECT_LT(e.validation_loss, last);
            last = e.validation_loss;
        }
    }
    EXPECT_EQ(report.best_validation_loss, last);
    EXPECT_EQ(report.validation_count, 80u);
    EXPECT_TRUE(m.network.finite());
}

TEST(Train, RejectsBadInput)
{
    TrainConfig c;
    c.shape = tiny_shape();
    EXPECT_THROW(train(Dataset{9, {}, {}, {}}, c), std::invalid_argument);
    Dataset d;
    d.encoding_length = 9;
    d.append(std::vector<float>(9, 0.0f), RewardVector{});
    c.learning_rate = -1;
    EXPECT_THROW(train(d, c), std::invalid_argument);
    c = TrainConfig{};
    EXPECT_THROW(train(d, c), std::invalid_argument);  // default shape expects the full encoding
}

TEST(Train, DivergenceIsReported)
{
    Dataset d;
    d.encoding_length = 9;
    Rng rng(7);
    for (int i = 0; i < 50; ++i) {
        std::vector<float> x(9);
        for (float& v : x) {
            v = static_cast<float>(1e30 * rng.uniform());
        }
        d.append(x, RewardVector{static_cast<double>(i), 1, 2});
    }
    TrainConfig c;
    c.shape = tiny_shape();
    EXPECT_THROW(train(d, c), std::runtime_error);
}

TEST(ModelFile, RoundTrip)
{
    Rng rng(8);
    ValueModel m{ValueNetwork<float>(tiny_shape()), TrainConfig{}, json{{"note", "x"}}};
    m.hyperparameters.shape = tiny_shape();
    m.network.initialize(rng);
    m.network.target_mean = {1, 2, 3};
    m.network.target_scale = {4, 5, 6};
    std::stringstream buf;
    save_model(buf, m);
    const auto back = load_model(buf);
    const std::vector<float> x{0.1f, 0.2f, 0.3f, 0.4f, 0.5f, 0.6f, 0.7f, 0.8f, 0.9f};
    EXPECT_EQ(back.network.predict(x), m.network.predict(x));
    EXPECT_EQ(back.training, m.training);
    std::stringstream bad("{\"format\":\"something-else\"}\n");
    EXPECT_THROW(load_model(bad), std::runtime_error);
}

TEST(DataGen, RerunIsByteIdentical)
{
    DataGenConfig c;
    c.count = 1;
    c.seed = 9;
    const auto a = bytes(generate_training_data(c));
    EXPECT_EQ(a, bytes(generate_training_data(c)));
    c.count = 5;
    const auto d = generate_training_data(c);
    std::stringstream buf(bytes(d));
    const auto back = load_dataset(buf);
    EXPECT_EQ(back.features, d.features);
    EXPECT_EQ(back.targets, d.targets);
    EXPECT_EQ(back.generator, d.generator);
}

TEST(DataGen, NoChangeOnlyMenusHaveZeroTargets)
{
    DataGenConfig c;
    c.count = 5;
    c.min_items = 1;
    c.max_items = 1;
    c.max_separators = 0;
    const auto d = generate_training_data(c);
    for (std::size_t i = 0; i < d.size(); ++i) {
        EXPECT_EQ(d.y(i), RewardVector{});
    }
}

TEST(DataGen, TargetsMatchReSimulation)
{
    DataGenConfig c;
    c.count = 25;
    c.seed = 10;
    c.max_items = 8;
    const auto d = generate_training_data(c);
    for (std::size_t i = 0; i < d.size(); ++i) {
        const auto s = sample_spec(c, i);
        EXPECT_EQ(d.x(i).size(), static_cast<std::size_t>(kEncodingLength));
        const auto enc = encode(s.before, s.after, static_cast<std::size_t>(c.session_window)).flatten();
        EXPECT_TRUE(std::equal(enc.begin(), enc.end(), d.x(i).begin()));

        // Independent replay: edge reward, then each continuation walked step by step.
        RewardVector want = reward(s.before, s.after, c.params);
        Rng rng(s.rollout_seed);
        RewardVector tail;
        for (int k = 0; k < c.rollouts; ++k) {
            const auto session_seed = rng.next();
            Rng walk(rng.next());
            auto state = simulate_session(InteractionState{s.after, s.before.user, s.before.expected_design},
                                          c.session_length, session_seed);
            double w = 1;
            for (int step = 0; step < c.horizon - 1; ++step) {
                const auto xs = enumerate(state.design, c.max_separators);
                const auto x = xs[walk.index(xs.size())];
                tail += w * reward(state, apply(state.design, x, c.max_separators), c.params);
                state = transition(state, x.with_visibility(true), c.session_length, walk.next(), c.max_separators);
                w *= c.discount;
            }
        }
        want += (c.discount / c.rollouts) * tail;
        const auto got = d.y(i);
        EXPECT_NEAR(got.serial, want.serial, 1e-3 * (1 + std::abs(want.serial)));
        EXPECT_NEAR(got.forage, want.forage, 1e-3 * (1 + std::abs(want.forage)));
        EXPECT_NEAR(got.recall, want.recall, 1e-3 * (1 + std::abs(want.recall)));
    }
}

TEST(Estimator, PlansWithValueNetwork)
{
    Rng rng(11);
    auto model = std::make_shared<ValueModel>();
    model->network.initialize(rng);
    NetworkEstimator est(model);
    const auto s = workload_state(10, 12);
    PlannerConfig c;
    c.iterations = 100;
    c.reward_source = RewardSource::value_network;
    c.seed = 3;
    const auto a = plan(s, c, ModelParams{}, &est);
    const auto b = plan(s, c, ModelParams{}, &est);
    EXPECT_EQ(plan_result_to_json(a).dump(), plan_result_to_json(b).dump());
    EXPECT_FALSE(validate_design(a.final_design).has_value());
}
