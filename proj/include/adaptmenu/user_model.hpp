#pragma once

// Predictive models of menu search. Memory activation of (label, location)
// pairs discounts item inspection time; three search strategies (serial,
// foraging, recall) turn a design and a user into selection times, and the
// reward of an adaptation is the interest-weighted drop in those times.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "core.hpp"

namespace adaptmenu {

struct ModelParams
{
    double delta = 40.0;     ///< cautious inspection cost of one item
    double t_c = 100.0;      ///< surprise penalty
    double t_trail = 50.0;   ///< pointing time when the cursor trails the gaze
    double theta = 0.5;      ///< recall activation threshold
    double a_p = 10.3;       ///< Fitts intercept
    double b_p = 4.8;        ///< Fitts slope
    int n_local_flat = 6;    ///< local-search span in menus without separators

    bool operator==(const ModelParams&) const = default;
};

inline std::optional<std::string> validate_params(const ModelParams& p)
{
    if (!(p.delta > 0 && p.t_c > 0 && p.t_trail > 0)) {
        return "time constants must be positive";
    }
    if (!(p.theta > 0 && p.theta <= 1)) {
        return "theta must lie in (0, 1]";
    }
    if (p.a_p < 0 || p.b_p < 0) {
        return "Fitts coefficients must be non-negative";
    }
    if (p.n_local_flat < 1) {
        return "n_local_flat must be at least 1";
    }
    return std::nullopt;
}

inline void to_json(json& j, const ModelParams& p)
{
    j = json{{"delta", p.delta}, {"t_c", p.t_c},   {"t_trail", p.t_trail},          {"theta", p.theta},
             {"a_p", p.a_p},     {"b_p", p.b_p},   {"n_local_flat", p.n_local_flat}};
}

inline void from_json(const json& j, ModelParams& p)
{
    p.delta = j.value("delta", p.delta);
    p.t_c = j.value("t_c", p.t_c);
    p.t_trail = j.value("t_trail", p.t_trail);
    p.theta = j.value("theta", p.theta);
    p.a_p = j.value("a_p", p.a_p);
    p.b_p = j.value("b_p", p.b_p);
    p.n_local_flat = j.value("n_local_flat", p.n_local_flat);
    if (auto err = validate_params(p)) {
        throw std::invalid_argument("model params: " + *err);
    }
}

enum class Strategy { serial, forage, recall };
inline constexpr std::array<Strategy, 3> kStrategies{Strategy::serial, Strategy::forage, Strategy::recall};

inline const char* to_string(Strategy s)
{
    switch (s) {
    case Strategy::serial: return "serial";
    case Strategy::forage: return "forage";
    case Strategy::recall: return "recall";
    }
    return "?";
}

inline Strategy strategy_from_string(const std::string& s)
{
    if (s == "serial") return Strategy::serial;
    if (s == "forage") return Strategy::forage;
    if (s == "recall") return Strategy::recall;
    throw std::invalid_argument("unknown strategy: " + s);
}

/*************************************************************************************************/
/// One value per search strategy.
struct RewardVector
{
    double serial = 0.0;
    double forage = 0.0;
    double recall = 0.0;

    double& operator[](Strategy s)
    {
        return s == Strategy::serial ? serial : s == Strategy::forage ? forage : recall;
    }
    double operator[](Strategy s) const
    {
        return s == Strategy::serial ? serial : s == Strategy::forage ? forage : recall;
    }

    RewardVector& operator+=(const RewardVector& o)
    {
        serial += o.serial;
        forage += o.forage;
        recall += o.recall;
        return *this;
    }
    RewardVector& operator-=(const RewardVector& o)
    {
        serial -= o.serial;
        forage -= o.forage;
        recall -= o.recall;
        return *this;
    }
    RewardVector& operator*=(double k)
    {
        serial *= k;
        forage *= k;
        recall *= k;
        return *this;
    }
    friend RewardVector operator+(RewardVector a, const RewardVector& b) { return a += b; }
    friend RewardVector operator-(RewardVector a, const RewardVector& b) { return a -= b; }
    friend RewardVector operator*(RewardVector a, double k) { return a *= k; }
    friend RewardVector operator*(double k, RewardVector a) { return a *= k; }

    double mean() const { return (serial + forage + recall) / 3.0; }
    double min() const { return std::min({serial, forage, recall}); }
    double max() const { return std::max({serial, forage, recall}); }
    bool finite() const { return std::isfinite(serial) && std::isfinite(forage) && std::isfinite(recall); }

    bool operator==(const RewardVector&) const = default;
};

inline void to_json(json& j, const RewardVector& v)
{
    j = json{{"serial", v.serial}, {"forage", v.forage}, {"recall", v.recall}};
}

inline void from_json(const json& j, RewardVector& v)
{
    v.serial = j.at("serial").get<double>();
    v.forage = j.at("forage").get<double>();
    v.recall = j.at("recall").get<double>();
}

/*************************************************************************************************/
/// Activation B(label, location) for every pair, computed in one pass over
/// the click log. Locations are 1-based item indices.
class ActivationTable
{
public:
    ActivationTable(const UserState& user, std::size_t n_labels) : n_labels_(n_labels)
    {
        int max_location = 0;
        for (const auto& c : user.log) {
            max_location = std::max(max_location, c.location);
        }
        width_ = static_cast<std::size_t>(max_location) + 1;
        cells_.assign(n_labels_ * width_, 0.0);
        for (const auto& c : user.log) {
            const auto elapsed = user.now - c.time;
            if (elapsed <= 0) {
                throw std::domain_error("activation: selection time not before current time");
            }
            cells_[static_cast<std::size_t>(c.label) * width_ + static_cast<std::size_t>(c.location)] +=
                std::pow(static_cast<double>(elapsed), -user.decay);
        }
    }

    double operator()(LabelId label, int location) const
    {
        if (location < 0 || static_cast<std::size_t>(location) >= width_ || label < 0
            || static_cast<std::size_t>(label) >= n_labels_) {
            return 0.0;
        }
        return cells_[static_cast<std::size_t>(label) * width_ + static_cast<std::size_t>(location)];
    }

    /// Locations where the label's activation reaches `threshold`, strongest
    /// first, ties by smaller location.
    std::vector<int> recall_candidates(LabelId label, double threshold) const
    {
        std::vector<int> out;
        for (std::size_t l = 1; l < width_; ++l) {
            if ((*this)(label, static_cast<int>(l)) >= threshold) {
                out.push_back(static_cast<int>(l));
            }
        }
        std::stable_sort(out.begin(), out.end(),
                         [&](int a, int b) { return (*this)(label, a) > (*this)(label, b); });
        return out;
    }

private:
    std::size_t n_labels_ = 0;
    std::size_t width_ = 1;
    std::vector<double> cells_;
};

/// Sum over past selections of this label at this location of (T - t)^-rho.
inline double activation(const UserState& user, LabelId label, int location)
{
    double b = 0.0;
    for (const auto& c : user.log) {
        if (c.label != label || c.location != location) {
            continue;
        }
        const auto elapsed = user.now - c.time;
        if (elapsed <= 0) {
            throw std::domain_error("activation: selection time not before current time");
        }
        b += std::pow(static_cast<double>(elapsed), -user.decay);
    }
    return b;
}

inline std::vector<double> interest(const ClickLog& log, std::size_t session_window, std::size_t n_labels)
{
    return interest_from_log(log, session_window, n_labels);
}

inline double t_read(double activation_level, const ModelParams& p)
{
    return p.delta / (1.0 + activation_level);
}

inline double t_pointing(int location, const ModelParams& p)
{
    return p.a_p + p.b_p * std::log2(1.0 + static_cast<double>(location));
}

/// Slow top-down scan to the target after every faster strategy failed.
inline double cautious_serial(int location, const ModelParams& p)
{
    return static_cast<double>(location) * p.delta + t_pointing(location, p);
}

namespace detail {

inline double read_at(const MenuDesign& d, const ActivationTable& act, int index, const ModelParams& p)
{
    return t_read(act(d.item_at(index), index), p);
}

inline double read_prefix(const MenuDesign& d, const ActivationTable& act, int count, const ModelParams& p)
{
    double t = 0.0;
    for (int j = 1; j <= count; ++j) {
        t += read_at(d, act, j, p);
    }
    return t;
}

inline void require_target(const MenuDesign& d, LabelId target)
{
    if (d.item_index(target) == 0) {
        throw UnknownLabel(target >= 0 && static_cast<std::size_t>(target) < d.catalog().size()
                               ? d.catalog().name(target)
                               : std::to_string(target));
    }
}

}  // namespace detail

inline double t_serial(const InteractionState& s, const ActivationTable& act, LabelId target, const ModelParams& p)
{
    detail::require_target(s.design, target);
    detail::require_target(s.expected_design, target);
    const int a = s.design.item_index(target);
    const int e = s.expected_design.item_index(target);
    if (a <= e) {
        return detail::read_prefix(s.design, act, a, p) + p.t_trail;
    }
    return detail::read_prefix(s.design, act, e, p) + p.t_trail + p.t_c + (a - e) * p.delta + t_pointing(a, p);
}

inline double t_forage(const InteractionState& s, const ActivationTable& act, LabelId target, const ModelParams& p)
{
    detail::require_target(s.design, target);
    const auto& d = s.design;
    const auto& catalog = d.catalog();
    double t = 0.0;
    for (const auto& g : groups(d)) {
        t += detail::read_at(d, act, g.start, p);
        if (!catalog.related(g.anchor, target)) {
            continue;
        }
        // The scan restarts at the anchor, so the anchor is read twice.
        const auto size = static_cast<int>(g.members.size());
        for (int k = 0; k < size; ++k) {
            t += detail::read_at(d, act, g.start + k, p);
            if (g.members[static_cast<std::size_t>(k)] == target) {
                return t + p.t_trail;
            }
        }
    }
    const int a = d.item_index(target);
    return t + p.t_trail + p.t_c + cautious_serial(a, p);
}

inline double t_recall(const InteractionState& s, const ActivationTable& act, LabelId target, const ModelParams& p)
{
    detail::require_target(s.design, target);
    const auto candidates = act.recall_candidates(target, p.theta);
    if (candidates.empty()) {
        return t_serial(s, act, target, p);
    }
    const auto& d = s.design;
    const int a = d.item_index(target);
    const int n = d.item_count();
    const bool grouped = d.separator_count() > 0;
    std::vector<Group> gs;
    std::vector<int> group_of(static_cast<std::size_t>(n) + 1, 0);
    if (grouped) {
        gs = groups(d);
        for (std::size_t g = 0; g < gs.size(); ++g) {
            for (std::size_t k = 0; k < gs[g].members.size(); ++k) {
                group_of[static_cast<std::size_t>(gs[g].start) + k] = static_cast<int>(g);
            }
        }
    }
    double t = 0.0;
    for (int l : candidates) {
        if (l > n) {
            // Remembered slot no longer exists; the glance finds nothing.
            t += p.t_c;
            continue;
        }
        t += detail::read_at(d, act, l, p);
        if (l == a) {
            return t + t_pointing(l, p);
        }
        int span = p.n_local_flat;
        bool nearby = std::abs(a - l) <= p.n_local_flat / 2;
        if (grouped) {
            const auto& g = gs[static_cast<std::size_t>(group_of[static_cast<std::size_t>(l)])];
            span = static_cast<int>(g.members.size());
            nearby = group_of[static_cast<std::size_t>(l)] == group_of[static_cast<std::size_t>(a)];
        }
        t += p.t_c + p.delta * span + p.t_trail;
        if (nearby) {
            return t;
        }
    }
    return t + cautious_serial(a, p);
}

inline double selection_time(const InteractionState& s, const ActivationTable& act, LabelId target,
                             Strategy strategy, const ModelParams& p)
{
    switch (strategy) {
    case Strategy::serial: return t_serial(s, act, target, p);
    case Strategy::forage: return t_forage(s, act, target, p);
    case Strategy::recall: return t_recall(s, act, target, p);
    }
    throw std::invalid_argument("unknown strategy");
}

inline ActivationTable activation_table(const InteractionState& s)
{
    return ActivationTable(s.user, s.design.catalog().size());
}

inline double t_serial(const InteractionState& s, LabelId target, const ModelParams& p)
{
    return t_serial(s, activation_table(s), target, p);
}
inline double t_forage(const InteractionState& s, LabelId target, const ModelParams& p)
{
    return t_forage(s, activation_table(s), target, p);
}
inline double t_recall(const InteractionState& s, LabelId target, const ModelParams& p)
{
    return t_recall(s, activation_table(s), target, p);
}
inline double selection_time(const InteractionState& s, LabelId target, Strategy strategy, const ModelParams& p)
{
    return selection_time(s, activation_table(s), target, strategy, p);
}

/// Interest-weighted selection time per strategy.
inline RewardVector expected_selection_time(const InteractionState& s, const ActivationTable& act,
                                            const ModelParams& p)
{
    RewardVector out;
    const auto& interest = s.user.interest;
    for (std::size_t i = 0; i < interest.size(); ++i) {
        const double w = interest[i];
        const auto label = static_cast<LabelId>(i);
        if (w <= 0.0 || s.design.item_index(label) == 0) {
            continue;
        }
        for (Strategy m : kStrategies) {
            out[m] += w * selection_time(s, act, label, m, p);
        }
    }
    return out;
}

inline RewardVector expected_selection_time(const InteractionState& s, const ModelParams& p)
{
    return expected_selection_time(s, activation_table(s), p);
}

/// The state the user is in when `after` is shown next: same memory, and
/// the expectation is still the last displayed design.
inline InteractionState presented(const InteractionState& before, const MenuDesign& after)
{
    return InteractionState{after, before.user, before.expected_design};
}

/// Per-strategy reward of replacing the current design by `after`: the
/// interest-weighted selection time before minus after. Positive is better.
inline RewardVector reward(const InteractionState& before, const ActivationTable& act, const MenuDesign& after,
                           const ModelParams& p)
{
    if (after == before.design) {
        return {};
    }
    return expected_selection_time(before, act, p) - expected_selection_time(presented(before, after), act, p);
}

inline RewardVector reward(const InteractionState& before, const MenuDesign& after, const ModelParams& p)
{
    return reward(before, activation_table(before), after, p);
}

}  // namespace adaptmenu
