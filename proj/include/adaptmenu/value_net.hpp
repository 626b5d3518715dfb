#pragma once

// Learned value estimator. A (state, adapted design) pair is encoded into
// three fixed-length feature groups (designs, positional associations, user
// observations); each group feeds its own dense head, the heads are joined
// by a shared trunk, and three tails predict the serial, forage and recall
// rewards. Targets are standardized per tail for training.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <memory>
#include <numeric>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "adaptation.hpp"
#include "core.hpp"
#include "planner.hpp"
#include "random.hpp"
#include "user_model.hpp"
#include "workload.hpp"

namespace adaptmenu {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

inline constexpr int kMaxItems = 20;
inline constexpr int kMaxRows = kMaxItems + kDefaultMaxSeparators;
inline constexpr int kTokens = kMaxItems + 2;  // item slots, separator, padding
inline constexpr int kSeparatorTokenIndex = kMaxItems;
inline constexpr int kPaddingToken = kMaxItems + 1;

inline constexpr int kLayoutFeatures = 10;
inline constexpr int kSlotFeatures = 3 * kLayoutFeatures + 1;
inline constexpr int kDesignHeadSize = 2 * kMaxRows * kTokens + kSlotFeatures * kMaxItems;
inline constexpr int kAssociationHeadSize = 2 * kMaxItems * kMaxItems;
inline constexpr int kUserHeadSize = 3 * kMaxItems + kMaxItems * kMaxItems;
inline constexpr int kEncodingLength = kDesignHeadSize + kAssociationHeadSize + kUserHeadSize;

/// Features of showing `after` in a state. Label slots are the items'
/// positions in the state's current design, so the encoding is independent
/// of label names.
struct FeatureEncoding
{
    std::vector<float> menu_onehot;     ///< adapted entries, kMaxRows x kTokens
    std::vector<float> current_onehot;  ///< current entries, same layout
    std::vector<float> slot_features;   ///< per-slot layout summary, kMaxItems x kSlotFeatures
    std::vector<float> assoc_current;   ///< relatedness of item positions, current design
    std::vector<float> assoc_diff;      ///< adapted minus current
    std::vector<float> clicks_prev;     ///< click frequencies of the session before last
    std::vector<float> clicks_curr;     ///< last session (user interest)
    std::vector<float> expected_position;
    std::vector<float> activation;  ///< B/(1+B) per slot and item position

    std::vector<float> flatten() const
    {
        std::vector<float> out;
        out.reserve(kEncodingLength);
        for (const auto* part : {&menu_onehot, &current_onehot, &slot_features, &assoc_current, &assoc_diff, &clicks_prev,
                                 &clicks_curr, &expected_position, &activation}) {
            out.insert(out.end(), part->begin(), part->end());
        }
        return out;
    }
};

namespace detail {

inline void check_capacity(const MenuDesign& d)
{
    if (d.item_count() > kMaxItems || d.separator_count() > kDefaultMaxSeparators) {
        throw std::invalid_argument("menu exceeds encoding capacity (" + std::to_string(kMaxItems) + " items, "
                                    + std::to_string(kDefaultMaxSeparators) + " separators)");
    }
}

inline std::vector<float> onehot_rows(const MenuDesign& d, const MenuDesign& slots)
{
    std::vector<float> out(static_cast<std::size_t>(kMaxRows * kTokens), 0.0f);
    const auto& entries = d.entries();
    for (int r = 0; r < kMaxRows; ++r) {
        int token = kPaddingToken;
        if (static_cast<std::size_t>(r) < entries.size()) {
            const LabelId e = entries[static_cast<std::size_t>(r)];
            if (e == kSeparator) {
                token = kSeparatorTokenIndex;
            } else {
                const int slot = slots.item_index(e) - 1;
                if (slot < 0) {
                    throw std::invalid_argument("encode: adapted design has an item missing from the current design");
                }
                token = slot;
            }
        }
        out[static_cast<std::size_t>(r * kTokens + token)] = 1.0f;
    }
    return out;
}

inline std::vector<float> positional_association(const MenuDesign& d)
{
    std::vector<float> out(static_cast<std::size_t>(kMaxItems * kMaxItems), 0.0f);
    const auto& items = d.items();
    for (std::size_t i = 0; i < items.size(); ++i) {
        for (std::size_t j = 0; j < items.size(); ++j) {
            out[i * kMaxItems + j] = d.catalog().related(items[i], items[j]) ? 1.0f : 0.0f;
        }
    }
    return out;
}

// Per item, written at column `col` of its slot: position, row, group
// ordinal, group size, anchor flag, relatedness to its anchor, items in
// earlier groups with a related anchor, activation at the position, index
// within the group, and the position again when the anchor is unrelated
// (the fallback scan length).
inline void layout_features(const MenuDesign& d, const MenuDesign& slots, const ActivationTable& act,
                            std::vector<float>& out, int col)
{
    const auto gs = groups(d);
    for (std::size_t g = 0; g < gs.size(); ++g) {
        const auto& members = gs[g].members;
        for (std::size_t k = 0; k < members.size(); ++k) {
            const int slot = slots.item_index(members[k]) - 1;
            if (slot < 0) {
                continue;
            }
            int related_before = 0;
            for (std::size_t h = 0; h < g; ++h) {
                if (d.catalog().related(gs[h].anchor, members[k])) {
                    related_before += static_cast<int>(gs[h].members.size());
                }
            }
            const double b = act(members[k], d.item_index(members[k]));
            float* f = out.data() + static_cast<std::size_t>(slot * kSlotFeatures + col);
            f[0] = static_cast<float>(d.item_index(members[k])) / kMaxItems;
            f[1] = static_cast<float>(d.row_index(members[k])) / kMaxRows;
            f[2] = static_cast<float>(g + 1) / (kDefaultMaxSeparators + 1);
            f[3] = static_cast<float>(members.size()) / kMaxItems;
            f[4] = k == 0 ? 1.0f : 0.0f;
            f[5] = d.catalog().related(members[k], gs[g].anchor) ? 1.0f : 0.0f;
            f[6] = static_cast<float>(related_before) / kMaxItems;
            f[7] = static_cast<float>(b / (1.0 + b));
            f[8] = static_cast<float>(k) / kMaxItems;
            f[9] = f[5] > 0 ? 0.0f : f[0];
        }
    }
}

}  // namespace detail

inline FeatureEncoding encode(const InteractionState& before, const ActivationTable& act, const MenuDesign& after,
                              std::size_t session_window = kDefaultSessionLength)
{
    detail::check_capacity(before.design);
    detail::check_capacity(after);
    const MenuDesign& slots = before.design;
    FeatureEncoding f;
    f.menu_onehot = detail::onehot_rows(after, slots);
    f.current_onehot = detail::onehot_rows(before.design, slots);
    f.slot_features.assign(static_cast<std::size_t>(kMaxItems * kSlotFeatures), 0.0f);
    detail::layout_features(after, slots, act, f.slot_features, 0);
    detail::layout_features(before.design, slots, act, f.slot_features, kLayoutFeatures);
    f.assoc_current = detail::positional_association(before.design);
    f.assoc_diff = detail::positional_association(after);
    for (std::size_t i = 0; i < f.assoc_diff.size(); ++i) {
        f.assoc_diff[i] -= f.assoc_current[i];
    }

    f.clicks_prev.assign(kMaxItems, 0.0f);
    f.clicks_curr.assign(kMaxItems, 0.0f);
    f.expected_position.assign(kMaxItems, 0.0f);
    f.activation.assign(static_cast<std::size_t>(kMaxItems * kMaxItems), 0.0f);

    const auto& log = before.user.log;
    const std::size_t end = log.size() > session_window ? log.size() - session_window : 0;
    const std::size_t begin = end > session_window ? end - session_window : 0;
    const std::size_t n_prev = end - begin;
    for (std::size_t i = begin; i < end; ++i) {
        const int slot = slots.item_index(log[i].label) - 1;
        if (slot >= 0) {
            f.clicks_prev[static_cast<std::size_t>(slot)] += 1.0f / static_cast<float>(n_prev);
        }
    }
    const auto& items = slots.items();
    for (std::size_t s = 0; s < items.size(); ++s) {
        const LabelId label = items[s];
        if (static_cast<std::size_t>(label) < before.user.interest.size()) {
            f.clicks_curr[s] = static_cast<float>(before.user.interest[static_cast<std::size_t>(label)]);
        }
        f.expected_position[s] = static_cast<float>(before.expected_design.item_index(label)) / kMaxItems;
        // Interest-weighted changes against the current and the expected layout.
        float* sf = f.slot_features.data() + s * kSlotFeatures;
        for (int j = 0; j < kLayoutFeatures; ++j) {
            sf[2 * kLayoutFeatures + j] = f.clicks_curr[s] * (sf[j] - sf[kLayoutFeatures + j]);
        }
        sf[3 * kLayoutFeatures] = f.clicks_curr[s] * (sf[0] - f.expected_position[s]);
        for (int p = 1; p <= kMaxItems; ++p) {
            const double b = act(label, p);
            f.activation[s * kMaxItems + static_cast<std::size_t>(p - 1)] = static_cast<float>(b / (1.0 + b));
        }
    }
    return f;
}

inline FeatureEncoding encode(const InteractionState& before, const MenuDesign& after,
                              std::size_t session_window = kDefaultSessionLength)
{
    return encode(before, activation_table(before), after, session_window);
}

/*************************************************************************************************/
struct NetShape
{
    std::array<int, 3> head_inputs{kDesignHeadSize, kAssociationHeadSize, kUserHeadSize};
    int head_width = 64;
    int trunk_width = 128;
    int tail_width = 64;

    int input_size() const { return head_inputs[0] + head_inputs[1] + head_inputs[2]; }
    bool operator==(const NetShape&) const = default;
};

inline void to_json(json& j, const NetShape& s)
{
    j = json{{"head_inputs", s.head_inputs},
             {"head_width", s.head_width},
             {"trunk_width", s.trunk_width},
             {"tail_width", s.tail_width}};
}

inline void from_json(const json& j, NetShape& s)
{
    s.head_inputs = j.at("head_inputs").get<std::array<int, 3>>();
    s.head_width = j.at("head_width").get<int>();
    s.trunk_width = j.at("trunk_width").get<int>();
    s.tail_width = j.at("tail_width").get<int>();
}

template <class Scalar>
struct DenseLayer
{
    using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    Mat w;
    Vec b;
};

/// Three heads, a shared trunk and three tails of two hidden layers each.
/// Layer order: heads 0-2, trunk 3, then tail t occupies 4+3t .. 6+3t.
template <class Scalar>
class ValueNetwork
{
public:
    using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    using Layer = DenseLayer<Scalar>;
    static constexpr int kLayerCount = 13;

    struct Cache
    {
        std::array<Mat, 3> head;
        Mat concat, mask_concat, trunk_in;
        Mat trunk, mask_trunk, tail_in;
        std::array<std::array<Mat, 2>, 3> tail;
        Mat out;
    };

    explicit ValueNetwork(NetShape shape = {}) : shape_(shape)
    {
        layers_.resize(kLayerCount);
        for (int h = 0; h < 3; ++h) {
            resize(h, shape_.head_width, shape_.head_inputs[static_cast<std::size_t>(h)]);
        }
        resize(3, shape_.trunk_width, 3 * shape_.head_width);
        for (int t = 0; t < 3; ++t) {
            resize(tail_layer(t, 0), shape_.tail_width, shape_.trunk_width);
            resize(tail_layer(t, 1), shape_.tail_width, shape_.tail_width);
            resize(tail_layer(t, 2), 1, shape_.tail_width);
        }
    }

    static constexpr int tail_layer(int tail, int k) { return 4 + 3 * tail + k; }

    const NetShape& shape() const noexcept { return shape_; }
    std::vector<Layer>& layers() noexcept { return layers_; }
    const std::vector<Layer>& layers() const noexcept { return layers_; }

    std::array<double, 3> target_mean{0.0, 0.0, 0.0};
    std::array<double, 3> target_scale{1.0, 1.0, 1.0};

    /// Uniform in +-sqrt(6 / fan_in), biases zero.
    void initialize(Rng& rng)
    {
        for (auto& l : layers_) {
            const double limit = std::sqrt(6.0 / static_cast<double>(l.w.cols()));
            for (Eigen::Index i = 0; i < l.w.size(); ++i) {
                l.w.data()[i] = static_cast<Scalar>((2.0 * rng.uniform() - 1.0) * limit);
            }
            l.b.setZero();
        }
    }

    std::size_t parameter_count() const
    {
        std::size_t n = 0;
        for (const auto& l : layers_) {
            n += static_cast<std::size_t>(l.w.size() + l.b.size());
        }
        return n;
    }

    bool finite() const
    {
        for (const auto& l : layers_) {
            if (!l.w.allFinite() || !l.b.allFinite()) {
                return false;
            }
        }
        return true;
    }

    /// Standardized outputs (3 x batch) for inputs (input_size x batch).
    /// Dropout is applied only when `rng` is given and `drop` > 0.
    Mat forward(const Mat& x, Cache* cache = nullptr, Rng* rng = nullptr, Scalar drop = 0) const
    {
        if (x.rows() != shape_.input_size()) {
            throw std::invalid_argument("value network: input has " + std::to_string(x.rows()) + " rows, expected "
                                        + std::to_string(shape_.input_size()));
        }
        Cache local;
        Cache& c = cache ? *cache : local;
        const Eigen::Index batch = x.cols();
        const int hw = shape_.head_width;
        c.concat.resize(3 * hw, batch);
        Eigen::Index offset = 0;
        for (int h = 0; h < 3; ++h) {
            const auto& l = layers_[static_cast<std::size_t>(h)];
            const auto rows = shape_.head_inputs[static_cast<std::size_t>(h)];
            c.head[static_cast<std::size_t>(h)] = relu((l.w * x.middleRows(offset, rows)).colwise() + l.b);
            c.concat.middleRows(h * hw, hw) = c.head[static_cast<std::size_t>(h)];
            offset += rows;
        }
        const bool dropping = rng != nullptr && drop > 0;
        if (!dropping) {
            c.mask_concat.resize(0, 0);
            c.mask_trunk.resize(0, 0);
        }
        c.trunk_in = dropping ? apply_dropout(c.concat, c.mask_concat, *rng, drop) : c.concat;
        const auto& trunk = layers_[3];
        c.trunk = relu((trunk.w * c.trunk_in).colwise() + trunk.b);
        c.tail_in = dropping ? apply_dropout(c.trunk, c.mask_trunk, *rng, drop) : c.trunk;
        c.out.resize(3, batch);
        for (int t = 0; t < 3; ++t) {
            const auto& l0 = layers_[static_cast<std::size_t>(tail_layer(t, 0))];
            const auto& l1 = layers_[static_cast<std::size_t>(tail_layer(t, 1))];
            const auto& l2 = layers_[static_cast<std::size_t>(tail_layer(t, 2))];
            auto& hid = c.tail[static_cast<std::size_t>(t)];
            hid[0] = relu((l0.w * c.tail_in).colwise() + l0.b);
            hid[1] = relu((l1.w * hid[0]).colwise() + l1.b);
            c.out.row(t) = (l2.w * hid[1]).colwise() + l2.b;
        }
        return c.out;
    }

    /// Summed per-tail mean squared error against standardized targets
    /// (3 x batch); fills `grad` with its gradient when given.
    Scalar loss(const Mat& x, const Mat& y, std::vector<Layer>* grad = nullptr, Rng* rng = nullptr,
                Scalar drop = 0) const
    {
        Cache c;
        const Mat out = forward(x, &c, rng, drop);
        const Mat diff = out - y;
        const auto batch = static_cast<Scalar>(x.cols());
        const Scalar value = diff.squaredNorm() / batch;
        if (grad) {
            backward(x, c, (Scalar(2) / batch) * diff, *grad);
        }
        return value;
    }

    /// Per-tail MSE in standardized units.
    std::array<double, 3> tail_mse(const Mat& x, const Mat& y) const
    {
        const Mat diff = forward(x) - y;
        std::array<double, 3> out{};
        for (int t = 0; t < 3; ++t) {
            out[static_cast<std::size_t>(t)] = static_cast<double>(diff.row(t).squaredNorm()) / static_cast<double>(x.cols());
        }
        return out;
    }

    /// Reward vector in time units for one encoded sample.
    RewardVector predict(std::span<const float> features) const
    {
        if (static_cast<int>(features.size()) != shape_.input_size()) {
            throw std::invalid_argument("value network: encoding length mismatch");
        }
        Mat x(shape_.input_size(), 1);
        for (int i = 0; i < shape_.input_size(); ++i) {
            x(i, 0) = static_cast<Scalar>(features[static_cast<std::size_t>(i)]);
        }
        const Mat out = forward(x);
        RewardVector v;
        for (std::size_t t = 0; t < 3; ++t) {
            v[kStrategies[t]] = static_cast<double>(out(static_cast<Eigen::Index>(t), 0)) * target_scale[t] + target_mean[t];
        }
        return v;
    }

    std::vector<Layer> zeros_like() const
    {
        std::vector<Layer> g(layers_.size());
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            g[i].w = Mat::Zero(layers_[i].w.rows(), layers_[i].w.cols());
            g[i].b = Vec::Zero(layers_[i].b.size());
        }
        return g;
    }

    template <class Other>
    ValueNetwork<Other> cast() const
    {
        ValueNetwork<Other> out(shape_);
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            out.layers()[i].w = layers_[i].w.template cast<Other>();
            out.layers()[i].b = layers_[i].b.template cast<Other>();
        }
        out.target_mean = target_mean;
        out.target_scale = target_scale;
        return out;
    }

private:
    void resize(int i, int out, int in)
    {
        layers_[static_cast<std::size_t>(i)].w = Mat::Zero(out, in);
        layers_[static_cast<std::size_t>(i)].b = Vec::Zero(out);
    }

    static Mat relu(const Mat& z) { return z.cwiseMax(Scalar(0)); }

    // Inverted dropout: kept units are scaled by 1/(1-drop).
    static Mat apply_dropout(const Mat& a, Mat& mask, Rng& rng, Scalar drop)
    {
        mask.resize(a.rows(), a.cols());
        const Scalar keep = Scalar(1) / (Scalar(1) - drop);
        for (Eigen::Index i = 0; i < mask.size(); ++i) {
            mask.data()[i] = rng.uniform() < static_cast<double>(drop) ? Scalar(0) : keep;
        }
        return a.cwiseProduct(mask);
    }

    static void relu_back(Mat& g, const Mat& activated)
    {
        g = (activated.array() > Scalar(0)).select(g, Scalar(0));
    }

    static void accumulate(Layer& g, const Mat& dz, const Mat& input)
    {
        g.w.noalias() += dz * input.transpose();
        g.b += dz.rowwise().sum();
    }

    void backward(const Mat& x, const Cache& c, const Mat& dout, std::vector<Layer>& grad) const
    {
        if (grad.size() != layers_.size()) {
            grad = zeros_like();
        }
        Mat d_tail_in = Mat::Zero(c.tail_in.rows(), c.tail_in.cols());
        for (int t = 0; t < 3; ++t) {
            const auto& hid = c.tail[static_cast<std::size_t>(t)];
            const int i0 = tail_layer(t, 0), i1 = tail_layer(t, 1), i2 = tail_layer(t, 2);
            const Mat g_out = dout.row(t);
            accumulate(grad[static_cast<std::size_t>(i2)], g_out, hid[1]);
            Mat g1 = layers_[static_cast<std::size_t>(i2)].w.transpose() * g_out;
            relu_back(g1, hid[1]);
            accumulate(grad[static_cast<std::size_t>(i1)], g1, hid[0]);
            Mat g0 = layers_[static_cast<std::size_t>(i1)].w.transpose() * g1;
            relu_back(g0, hid[0]);
            accumulate(grad[static_cast<std::size_t>(i0)], g0, c.tail_in);
            d_tail_in.noalias() += layers_[static_cast<std::size_t>(i0)].w.transpose() * g0;
        }
        Mat d_trunk = c.mask_trunk.size() == d_tail_in.size() ? Mat(d_tail_in.cwiseProduct(c.mask_trunk)) : d_tail_in;
        relu_back(d_trunk, c.trunk);
        accumulate(grad[3], d_trunk, c.trunk_in);
        Mat d_trunk_in = layers_[3].w.transpose() * d_trunk;
        Mat d_concat = c.mask_concat.size() == d_trunk_in.size() ? Mat(d_trunk_in.cwiseProduct(c.mask_concat))
                                                                  : d_trunk_in;
        const int hw = shape_.head_width;
        Eigen::Index offset = 0;
        for (int h = 0; h < 3; ++h) {
            Mat g = d_concat.middleRows(h * hw, hw);
            relu_back(g, c.head[static_cast<std::size_t>(h)]);
            const auto rows = shape_.head_inputs[static_cast<std::size_t>(h)];
            accumulate(grad[static_cast<std::size_t>(h)], g, x.middleRows(offset, rows));
            offset += rows;
        }
    }

    NetShape shape_;
    std::vector<Layer> layers_;
};

/*************************************************************************************************/
/// Encoded samples with standard-unit reward targets, stored sample-major.
struct Dataset
{
    int encoding_length = kEncodingLength;
    std::vector<float> features;  ///< count x encoding_length
    std::vector<float> targets;   ///< count x 3 (serial, forage, recall)
    json generator = json::object();

    std::size_t size() const { return targets.size() / 3; }

    void append(std::span<const float> x, const RewardVector& y)
    {
        if (static_cast<int>(x.size()) != encoding_length) {
            throw std::invalid_argument("dataset: encoding length mismatch");
        }
        features.insert(features.end(), x.begin(), x.end());
        targets.push_back(static_cast<float>(y.serial));
        targets.push_back(static_cast<float>(y.forage));
        targets.push_back(static_cast<float>(y.recall));
    }

    std::span<const float> x(std::size_t i) const
    {
        return {features.data() + i * static_cast<std::size_t>(encoding_length),
                static_cast<std::size_t>(encoding_length)};
    }

    RewardVector y(std::size_t i) const
    {
        return RewardVector{targets[3 * i], targets[3 * i + 1], targets[3 * i + 2]};
    }
};

inline constexpr int kDatasetVersion = 1;
inline constexpr int kModelVersion = 1;

namespace detail {

template <class T>
void write_floats(std::ostream& out, std::span<const T> values)
{
    for (T v : values) {
        const float f = static_cast<float>(v);
        out.write(reinterpret_cast<const char*>(&f), sizeof f);
    }
}

inline void read_floats(std::istream& in, float* dst, std::size_t n, const char* what)
{
    in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n * sizeof(float)));
    if (static_cast<std::size_t>(in.gcount()) != n * sizeof(float)) {
        throw std::runtime_error(std::string(what) + ": truncated file");
    }
}

inline json read_header(std::istream& in, const char* format)
{
    std::string line;
    if (!std::getline(in, line)) {
        throw std::runtime_error(std::string(format) + ": missing header");
    }
    json h = json::parse(line);
    if (h.value("format", "") != format) {
        throw std::runtime_error(std::string("not a ") + format + " file");
    }
    return h;
}

}  // namespace detail

/// One JSON header line, then count records of encoding_length + 3 float32.
inline void save_dataset(std::ostream& out, const Dataset& d)
{
    json header{{"format", "adaptmenu-dataset"},
                {"version", kDatasetVersion},
                {"encoding_length", d.encoding_length},
                {"count", d.size()},
                {"targets", {"serial", "forage", "recall"}},
                {"generator", d.generator}};
    out << header.dump() << '\n';
    for (std::size_t i = 0; i < d.size(); ++i) {
        detail::write_floats(out, d.x(i));
        detail::write_floats(out, std::span<const float>(d.targets.data() + 3 * i, 3));
    }
}

inline Dataset load_dataset(std::istream& in)
{
    const json h = detail::read_header(in, "adaptmenu-dataset");
    if (h.at("version").get<int>() != kDatasetVersion) {
        throw std::runtime_error("dataset: unsupported version " + h.at("version").dump());
    }
    Dataset d;
    d.encoding_length = h.at("encoding_length").get<int>();
    d.generator = h.value("generator", json::object());
    const auto count = h.at("count").get<std::size_t>();
    const auto len = static_cast<std::size_t>(d.encoding_length);
    d.features.resize(count * len);
    d.targets.resize(count * 3);
    for (std::size_t i = 0; i < count; ++i) {
        detail::read_floats(in, d.features.data() + i * len, len, "dataset");
        detail::read_floats(in, d.targets.data() + 3 * i, 3, "dataset");
    }
    return d;
}

inline void save_dataset(const std::string& path, const Dataset& d)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write " + path);
    }
    save_dataset(out, d);
}

inline Dataset load_dataset(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot read " + path);
    }
    return load_dataset(in);
}

/*************************************************************************************************/
struct DataGenConfig
{
    std::size_t count = 1000;
    std::uint64_t seed = 0;
    int min_items = 5;
    int max_items = 15;
    double zipf_shape = 1.5;
    int history_clicks = 60;
    int session_window = 20;
    int warmup_steps = 3;  ///< random adaptations applied before sampling, so deeper tree states are covered
    int horizon = 4;
    double discount = PlannerConfig{}.discount;
    int rollouts = 2;
    int session_length = kDefaultSessionLength;
    int max_separators = kDefaultMaxSeparators;
    ModelParams params;
};

inline void to_json(json& j, const DataGenConfig& c)
{
    j = json{{"count", c.count},
             {"seed", c.seed},
             {"min_items", c.min_items},
             {"max_items", c.max_items},
             {"zipf_shape", c.zipf_shape},
             {"history_clicks", c.history_clicks},
             {"session_window", c.session_window},
             {"warmup_steps", c.warmup_steps},
             {"horizon", c.horizon},
             {"discount", c.discount},
             {"rollouts", c.rollouts},
             {"session_length", c.session_length},
             {"max_separators", c.max_separators},
             {"params", c.params}};
}

inline std::optional<std::string> validate_datagen(const DataGenConfig& c)
{
    if (c.count < 1) return "count must be at least 1";
    if (c.min_items < 1 || c.max_items < c.min_items) return "item range is empty";
    if (c.max_items > kMaxItems) return "max items exceeds encoding capacity";
    if (c.max_separators > kDefaultMaxSeparators) return "separator budget exceeds encoding capacity";
    if (c.horizon < 1) return "horizon must be at least 1";
    if (c.rollouts < 1) return "rollouts must be at least 1";
    if (c.history_clicks < 0 || c.session_window < 1 || c.warmup_steps < 0) return "negative sizes";
    if (!(c.discount > 0 && c.discount <= 1)) return "discount must lie in (0, 1]";
    return validate_params(c.params);
}

/// State and adapted design of one training sample, plus the seed that
/// drives its target rollouts.
struct SampleSpec
{
    InteractionState before;
    MenuDesign after;
    std::uint64_t rollout_seed = 0;
};

inline SampleSpec sample_spec(const DataGenConfig& c, std::size_t index)
{
    Rng rng(mix_seed(c.seed, index));
    const int n = c.min_items + static_cast<int>(rng.index(static_cast<std::size_t>(c.max_items - c.min_items + 1)));
    const auto design = random_design(n, rng, c.max_separators);
    auto log = zipf_history(design, c.zipf_shape, c.history_clicks, rng);
    auto state = make_state(design, user_from_history(std::move(log), static_cast<std::size_t>(c.session_window),
                                                      design.catalog().size()));
    const auto warmup = static_cast<int>(rng.index(static_cast<std::size_t>(c.warmup_steps) + 1));
    for (int k = 0; k < warmup; ++k) {
        const auto candidates = enumerate_candidates(state.design, c.max_separators);
        const auto& pick = candidates[rng.index(candidates.size())];
        const bool visible = pick.adaptation.kind == AdaptationKind::no_change || rng.uniform() < 0.5;
        state = transition_to(state, pick.design, visible, c.session_length, rng.next());
    }
    const auto candidates = enumerate_candidates(state.design, c.max_separators);
    SampleSpec s{state, candidates[rng.index(candidates.size())].design, 0};
    s.rollout_seed = rng.next();
    return s;
}

/// Edge reward of showing the adapted design plus the discounted mean of
/// random continuations over the rest of the horizon.
inline RewardVector sample_target(const SampleSpec& s, const DataGenConfig& c)
{
    PlannerConfig pc;
    pc.discount = c.discount;
    pc.session_length = c.session_length;
    pc.max_separators = c.max_separators;
    RewardVector edge = reward(s.before, s.after, c.params);
    if (c.horizon <= 1) {
        return edge;
    }
    Rng rng(s.rollout_seed);
    RewardVector sum;
    for (int k = 0; k < c.rollouts; ++k) {
        const auto session_seed = rng.next();
        Rng stream(rng.next());
        const auto next = transition_to(s.before, s.after, true, c.session_length, session_seed);
        sum += rollout(next, c.horizon - 1, stream, c.params, pc);
    }
    return edge + (c.discount / c.rollouts) * sum;
}

inline Dataset generate_training_data(const DataGenConfig& c)
{
    if (auto err = validate_datagen(c)) {
        throw std::invalid_argument("data generation: " + *err);
    }
    Dataset d;
    d.generator = c;
    d.features.reserve(c.count * static_cast<std::size_t>(kEncodingLength));
    d.targets.reserve(c.count * 3);
    for (std::size_t i = 0; i < c.count; ++i) {
        const auto s = sample_spec(c, i);
        d.append(encode(s.before, s.after, static_cast<std::size_t>(c.session_window)).flatten(), sample_target(s, c));
    }
    return d;
}

/*************************************************************************************************/
struct TrainConfig
{
    double learning_rate = 0.001;
    double decay = 0.9;
    double epsilon = 1e-7;
    double dropout = 0.5;
    double validation_fraction = 0.2;
    int max_epochs = 200;
    int patience = 10;
    int batch_size = 64;
    std::uint64_t seed = 0;
    NetShape shape;
};

inline void to_json(json& j, const TrainConfig& c)
{
    j = json{{"learning_rate", c.learning_rate},
             {"decay", c.decay},
             {"epsilon", c.epsilon},
             {"dropout", c.dropout},
             {"validation_fraction", c.validation_fraction},
             {"max_epochs", c.max_epochs},
             {"patience", c.patience},
             {"batch_size", c.batch_size},
             {"seed", c.seed},
             {"shape", c.shape}};
}

inline void from_json(const json& j, TrainConfig& c)
{
    const TrainConfig d;
    c.learning_rate = j.value("learning_rate", d.learning_rate);
    c.decay = j.value("decay", d.decay);
    c.epsilon = j.value("epsilon", d.epsilon);
    c.dropout = j.value("dropout", d.dropout);
    c.validation_fraction = j.value("validation_fraction", d.validation_fraction);
    c.max_epochs = j.value("max_epochs", d.max_epochs);
    c.patience = j.value("patience", d.patience);
    c.batch_size = j.value("batch_size", d.batch_size);
    c.seed = j.value("seed", d.seed);
    c.shape = j.contains("shape") ? j.at("shape").get<NetShape>() : d.shape;
}

inline std::optional<std::string> validate_train(const TrainConfig& c)
{
    if (!(c.learning_rate > 0)) return "learning rate must be positive";
    if (!(c.decay >= 0 && c.decay < 1)) return "decay must lie in [0, 1)";
    if (!(c.dropout >= 0 && c.dropout < 1)) return "dropout must lie in [0, 1)";
    if (!(c.validation_fraction >= 0 && c.validation_fraction < 1)) return "validation fraction must lie in [0, 1)";
    if (c.max_epochs < 1 || c.patience < 1 || c.batch_size < 1) return "epochs, patience and batch size must be positive";
    return std::nullopt;
}

struct EpochRecord
{
    int epoch = 0;
    double train_loss = 0.0;
    double validation_loss = 0.0;
    bool checkpoint = false;  ///< best validation loss so far; weights retained
};

struct TrainReport
{
    std::vector<EpochRecord> curve;
    int best_epoch = 0;
    double best_validation_loss = std::numeric_limits<double>::infinity();
    std::array<double, 3> validation_mse{};  ///< standardized units, best weights
    std::size_t train_count = 0;
    std::size_t validation_count = 0;
    std::vector<std::size_t> validation_indices;
};

inline void to_json(json& j, const TrainReport& r)
{
    json curve = json::array();
    for (const auto& e : r.curve) {
        curve.push_back({{"epoch", e.epoch},
                         {"train_loss", e.train_loss},
                         {"validation_loss", e.validation_loss},
                         {"checkpoint", e.checkpoint}});
    }
    j = json{{"curve", curve},
             {"best_epoch", r.best_epoch},
             {"best_validation_loss", r.best_validation_loss},
             {"validation_mse", {{"serial", r.validation_mse[0]}, {"forage", r.validation_mse[1]}, {"recall", r.validation_mse[2]}}},
             {"train_count", r.train_count},
             {"validation_count", r.validation_count}};
}

struct ValueModel
{
    ValueNetwork<float> network;
    TrainConfig hyperparameters;
    json training = json::object();
};

namespace detail {

using MatF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic>;

inline void gather(const Dataset& d, std::span<const std::size_t> idx, const std::array<double, 3>& mean,
                   const std::array<double, 3>& scale, MatF& x, MatF& y)
{
    const auto len = static_cast<Eigen::Index>(d.encoding_length);
    x.resize(len, static_cast<Eigen::Index>(idx.size()));
    y.resize(3, static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) {
        const auto col = static_cast<Eigen::Index>(k);
        x.col(col) = Eigen::Map<const Eigen::VectorXf>(d.x(idx[k]).data(), len);
        for (int t = 0; t < 3; ++t) {
            y(t, col) = static_cast<float>((d.targets[3 * idx[k] + static_cast<std::size_t>(t)] - mean[static_cast<std::size_t>(t)])
                                           / scale[static_cast<std::size_t>(t)]);
        }
    }
}

}  // namespace detail

/// RMSProp on summed per-tail MSE with dropout, early stopping on a held-out
/// split, and restoration of the best validation weights.
inline ValueModel train(const Dataset& data, const TrainConfig& config, TrainReport* report_out = nullptr)
{
    if (data.size() == 0) {
        throw std::invalid_argument("train: empty dataset");
    }
    if (auto err = validate_train(config)) {
        throw std::invalid_argument("train: " + *err);
    }
    if (data.encoding_length != config.shape.input_size()) {
        throw std::invalid_argument("train: dataset encoding length does not match network inputs");
    }
    Rng rng(config.seed);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng split_rng(mix_seed(config.seed, 1));
    split_rng.shuffle(std::span<std::size_t>(order));
    auto n_val = static_cast<std::size_t>(std::llround(config.validation_fraction * static_cast<double>(data.size())));
    if (data.size() > 1 && config.validation_fraction > 0) {
        n_val = std::clamp<std::size_t>(n_val, 1, data.size() - 1);
    } else {
        n_val = 0;
    }
    std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
    std::vector<std::size_t> tr(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
    if (val.empty()) {
        val = tr;
    }

    ValueModel model{ValueNetwork<float>(config.shape), config, json::object()};
    auto& net = model.network;
    for (int t = 0; t < 3; ++t) {
        double sum = 0.0, sq = 0.0;
        for (auto i : tr) {
            const double v = data.targets[3 * i + static_cast<std::size_t>(t)];
            sum += v;
            sq += v * v;
        }
        const double mean = sum / static_cast<double>(tr.size());
        const double var = std::max(0.0, sq / static_cast<double>(tr.size()) - mean * mean);
        net.target_mean[static_cast<std::size_t>(t)] = mean;
        net.target_scale[static_cast<std::size_t>(t)] = var > 1e-12 ? std::sqrt(var) : 1.0;
    }
    net.initialize(rng);

    detail::MatF xv, yv;
    detail::gather(data, val, net.target_mean, net.target_scale, xv, yv);

    auto second_moment = net.zeros_like();
    auto best = net.layers();
    TrainReport report;
    report.train_count = tr.size();
    report.validation_count = n_val;
    report.validation_indices.assign(val.begin(), val.end());
    int since_best = 0;
    detail::MatF xb, yb;
    const auto lr = static_cast<float>(config.learning_rate);
    const auto rho = static_cast<float>(config.decay);
    const auto eps = static_cast<float>(config.epsilon);

    for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
        rng.shuffle(std::span<std::size_t>(tr));
        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < tr.size(); start += static_cast<std::size_t>(config.batch_size)) {
            const auto end = std::min(tr.size(), start + static_cast<std::size_t>(config.batch_size));
            detail::gather(data, std::span<const std::size_t>(tr.data() + start, end - start), net.target_mean,
                           net.target_scale, xb, yb);
            auto grad = net.zeros_like();
            const float l = net.loss(xb, yb, &grad, &rng, static_cast<float>(config.dropout));
            if (!std::isfinite(l)) {
                throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch) + ", batch "
                                         + std::to_string(batches) + " (learning rate "
                                         + std::to_string(config.learning_rate) + ")");
            }
            epoch_loss += l;
            ++batches;
            for (std::size_t i = 0; i < grad.size(); ++i) {
                auto& s = second_moment[i];
                auto& p = net.layers()[i];
                s.w = rho * s.w + (1 - rho) * grad[i].w.cwiseAbs2();
                s.b = rho * s.b + (1 - rho) * grad[i].b.cwiseAbs2();
                p.w.array() -= lr * grad[i].w.array() / (s.w.array().sqrt() + eps);
                p.b.array() -= lr * grad[i].b.array() / (s.b.array().sqrt() + eps);
            }
        }
        const double val_loss = net.loss(xv, yv);
        if (!std::isfinite(val_loss)) {
            throw std::runtime_error("train: non-finite validation loss at epoch " + std::to_string(epoch));
        }
        EpochRecord rec{epoch, epoch_loss / static_cast<double>(batches), val_loss, false};
        if (val_loss < report.best_validation_loss) {
            report.best_validation_loss = val_loss;
            report.best_epoch = epoch;
            best = net.layers();
            rec.checkpoint = true;
            since_best = 0;
        } else if (++since_best >= config.patience) {
            report.curve.push_back(rec);
            break;
        }
        report.curve.push_back(rec);
    }
    net.layers() = best;
    report.validation_mse = net.tail_mse(xv, yv);
    model.training = report;
    if (report_out) {
        *report_out = std::move(report);
    }
    return model;
}

/*************************************************************************************************/
/// One JSON header line (shape, layer sizes, target scaling, hyperparameters,
/// training record), then each layer's weights row-major and its biases as
/// float32.
inline void save_model(std::ostream& out, const ValueModel& m)
{
    json layers = json::array();
    for (const auto& l : m.network.layers()) {
        layers.push_back({{"rows", l.w.rows()}, {"cols", l.w.cols()}});
    }
    json header{{"format", "adaptmenu-value-net"},
                {"version", kModelVersion},
                {"shape", m.network.shape()},
                {"layers", layers},
                {"target_mean", m.network.target_mean},
                {"target_scale", m.network.target_scale},
                {"hyperparameters", m.hyperparameters},
                {"training", m.training}};
    out << header.dump() << '\n';
    for (const auto& l : m.network.layers()) {
        const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = l.w;
        detail::write_floats(out, std::span<const float>(rm.data(), static_cast<std::size_t>(rm.size())));
        detail::write_floats(out, std::span<const float>(l.b.data(), static_cast<std::size_t>(l.b.size())));
    }
}

inline ValueModel load_model(std::istream& in)
{
    const json h = detail::read_header(in, "adaptmenu-value-net");
    if (h.at("version").get<int>() != kModelVersion) {
        throw std::runtime_error("model: unsupported version " + h.at("version").dump());
    }
    ValueModel m{ValueNetwork<float>(h.at("shape").get<NetShape>()), h.value("hyperparameters", json::object()).get<TrainConfig>(),
                 h.value("training", json::object())};
    m.network.target_mean = h.at("target_mean").get<std::array<double, 3>>();
    m.network.target_scale = h.at("target_scale").get<std::array<double, 3>>();
    const auto& sizes = h.at("layers");
    if (sizes.size() != m.network.layers().size()) {
        throw std::runtime_error("model: layer count mismatch");
    }
    for (std::size_t i = 0; i < sizes.size(); ++i) {
        auto& l = m.network.layers()[i];
        if (sizes[i].at("rows").get<Eigen::Index>() != l.w.rows() || sizes[i].at("cols").get<Eigen::Index>() != l.w.cols()) {
            throw std::runtime_error("model: layer " + std::to_string(i) + " shape mismatch");
        }
        Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(l.w.rows(), l.w.cols());
        detail::read_floats(in, rm.data(), static_cast<std::size_t>(rm.size()), "model");
        l.w = rm;
        detail::read_floats(in, l.b.data(), static_cast<std::size_t>(l.b.size()), "model");
    }
    if (!m.network.finite()) {
        throw std::runtime_error("model: non-finite weights");
    }
    return m;
}

inline void save_model(const std::string& path, const ValueModel& m)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write " + path);
    }
    save_model(out, m);
}

inline ValueModel load_model(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot read " + path);
    }
    return load_model(in);
}

/// Planner adapter: encodes the query and runs the network.
class NetworkEstimator final : public ValueEstimator
{
public:
    explicit NetworkEstimator(std::shared_ptr<const ValueModel> model,
                              std::size_t session_window = kDefaultSessionLength)
        : model_(std::move(model)), window_(session_window)
    {
        if (!model_) {
            throw std::invalid_argument("estimator without model");
        }
    }

    RewardVector estimate(const InteractionState& before, const MenuDesign& after) const override
    {
        return model_->network.predict(encode(before, after, window_).flatten());
    }

    const ValueModel& model() const noexcept { return *model_; }

private:
    std::shared_ptr<const ValueModel> model_;
    std::size_t window_;
};

/*************************************************************************************************/
/// Largest relative difference between analytic and central-difference
/// gradients of the loss over every parameter.
inline double gradient_check(const ValueNetwork<double>& net, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                             double step = 1e-6)
{
    std::vector<DenseLayer<double>> grad;
    net.loss(x, y, &grad);
    ValueNetwork<double> probe = net;
    double worst = 0.0;
    auto check = [&](double& param, double analytic) {
        const double saved = param;
        param = saved + step;
        const double up = probe.loss(x, y);
        param = saved - step;
        const double down = probe.loss(x, y);
        param = saved;
        const double numeric = (up - down) / (2 * step);
        const double denom = std::max(std::abs(analytic) + std::abs(numeric), 1e-8);
        worst = std::max(worst, std::abs(analytic - numeric) / denom);
    };
    for (std::size_t i = 0; i < probe.layers().size(); ++i) {
        auto& l = probe.layers()[i];
        for (Eigen::Index k = 0; k < l.w.size(); ++k) {
            check(l.w.data()[k], grad[i].w.data()[k]);
        }
        for (Eigen::Index k = 0; k < l.b.size(); ++k) {
            check(l.b.data()[k], grad[i].b.data()[k]);
        }
    }
    return worst;
}

}  // namespace adaptmenu
