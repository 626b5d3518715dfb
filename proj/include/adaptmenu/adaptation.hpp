#pragma once

// Menu reorganizations: enumeration of feasible adaptations, their
// application, and state transitions with simulated user sessions for
// adaptations that are shown to the user.

#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "core.hpp"
#include "random.hpp"

namespace adaptmenu {

struct InfeasibleAdaptation : std::invalid_argument
{
    using std::invalid_argument::invalid_argument;
};

enum class AdaptationKind {
    no_change,
    move_item,
    swap_items,
    add_separator,
    remove_separator,
    move_group,
    swap_groups,
};

/// A single reorganization. Indices are 1-based:
///   move_item        label_a moves so that it sits at entry position `a` of the result
///   swap_items       label_a and label_b trade places
///   add_separator    separator inserted after item `a`
///   remove_separator separator number `a` (counted from the top) is removed
///   move_group       group `a` is reinserted at group position `b`
///   swap_groups      groups `a` < `b` trade places
struct Adaptation
{
    AdaptationKind kind = AdaptationKind::no_change;
    LabelId label_a = kSeparator;
    LabelId label_b = kSeparator;
    int a = 0;
    int b = 0;
    bool visible = true;

    static Adaptation no_change(bool visible = true) { return {AdaptationKind::no_change, kSeparator, kSeparator, 0, 0, visible}; }
    static Adaptation move_item(LabelId label, int to) { return {AdaptationKind::move_item, label, kSeparator, to, 0, true}; }
    static Adaptation swap_items(LabelId x, LabelId y) { return {AdaptationKind::swap_items, x, y, 0, 0, true}; }
    static Adaptation add_separator(int after) { return {AdaptationKind::add_separator, kSeparator, kSeparator, after, 0, true}; }
    static Adaptation remove_separator(int index) { return {AdaptationKind::remove_separator, kSeparator, kSeparator, index, 0, true}; }
    static Adaptation move_group(int group, int to) { return {AdaptationKind::move_group, kSeparator, kSeparator, group, to, true}; }
    static Adaptation swap_groups(int i, int j) { return {AdaptationKind::swap_groups, kSeparator, kSeparator, i, j, true}; }

    Adaptation with_visibility(bool v) const
    {
        Adaptation out = *this;
        out.visible = v;
        return out;
    }

    /// Same reorganization regardless of visibility.
    bool same_change(const Adaptation& o) const
    {
        return kind == o.kind && label_a == o.label_a && label_b == o.label_b && a == o.a && b == o.b;
    }

    bool operator==(const Adaptation&) const = default;
};

inline const char* to_string(AdaptationKind k)
{
    switch (k) {
    case AdaptationKind::no_change: return "no_change";
    case AdaptationKind::move_item: return "move_item";
    case AdaptationKind::swap_items: return "swap_items";
    case AdaptationKind::add_separator: return "add_separator";
    case AdaptationKind::remove_separator: return "remove_separator";
    case AdaptationKind::move_group: return "move_group";
    case AdaptationKind::swap_groups: return "swap_groups";
    }
    return "?";
}

inline AdaptationKind adaptation_kind_from_string(const std::string& s)
{
    for (auto k : {AdaptationKind::no_change, AdaptationKind::move_item, AdaptationKind::swap_items,
                   AdaptationKind::add_separator, AdaptationKind::remove_separator, AdaptationKind::move_group,
                   AdaptationKind::swap_groups}) {
        if (s == to_string(k)) {
            return k;
        }
    }
    throw std::invalid_argument("unknown adaptation kind: " + s);
}

inline json adaptation_to_json(const Adaptation& x, const Catalog& catalog)
{
    json args = json::object();
    switch (x.kind) {
    case AdaptationKind::no_change: break;
    case AdaptationKind::move_item: args = {{"label", catalog.name(x.label_a)}, {"to", x.a}}; break;
    case AdaptationKind::swap_items: args = {{"a", catalog.name(x.label_a)}, {"b", catalog.name(x.label_b)}}; break;
    case AdaptationKind::add_separator: args = {{"after", x.a}}; break;
    case AdaptationKind::remove_separator: args = {{"index", x.a}}; break;
    case AdaptationKind::move_group: args = {{"group", x.a}, {"to", x.b}}; break;
    case AdaptationKind::swap_groups: args = {{"i", x.a}, {"j", x.b}}; break;
    }
    return json{{"kind", to_string(x.kind)}, {"args", args}, {"visible", x.visible}};
}

inline Adaptation adaptation_from_json(const json& j, const Catalog& catalog)
{
    Adaptation x;
    x.kind = adaptation_kind_from_string(j.at("kind").get<std::string>());
    x.visible = j.value("visible", true);
    const json args = j.value("args", json::object());
    switch (x.kind) {
    case AdaptationKind::no_change: break;
    case AdaptationKind::move_item:
        x.label_a = catalog.id(args.at("label").get<std::string>());
        x.a = args.at("to").get<int>();
        break;
    case AdaptationKind::swap_items:
        x.label_a = catalog.id(args.at("a").get<std::string>());
        x.label_b = catalog.id(args.at("b").get<std::string>());
        break;
    case AdaptationKind::add_separator: x.a = args.at("after").get<int>(); break;
    case AdaptationKind::remove_separator: x.a = args.at("index").get<int>(); break;
    case AdaptationKind::move_group:
        x.a = args.at("group").get<int>();
        x.b = args.at("to").get<int>();
        break;
    case AdaptationKind::swap_groups:
        x.a = args.at("i").get<int>();
        x.b = args.at("j").get<int>();
        break;
    }
    return x;
}

namespace detail {

/// Drops separators that became leading, trailing or doubled.
inline std::vector<LabelId> collapse_separators(const std::vector<LabelId>& entries)
{
    std::vector<LabelId> out;
    out.reserve(entries.size());
    for (LabelId e : entries) {
        if (e == kSeparator && (out.empty() || out.back() == kSeparator)) {
            continue;
        }
        out.push_back(e);
    }
    while (!out.empty() && out.back() == kSeparator) {
        out.pop_back();
    }
    return out;
}

inline std::vector<std::vector<LabelId>> split_groups(const std::vector<LabelId>& entries)
{
    std::vector<std::vector<LabelId>> out(1);
    for (LabelId e : entries) {
        if (e == kSeparator) {
            out.emplace_back();
        } else {
            out.back().push_back(e);
        }
    }
    return out;
}

inline std::vector<LabelId> join_groups(const std::vector<std::vector<LabelId>>& gs)
{
    std::vector<LabelId> out;
    for (std::size_t g = 0; g < gs.size(); ++g) {
        if (g > 0) {
            out.push_back(kSeparator);
        }
        out.insert(out.end(), gs[g].begin(), gs[g].end());
    }
    return out;
}

inline std::vector<LabelId> without_item(const std::vector<LabelId>& entries, LabelId label)
{
    std::vector<LabelId> out;
    out.reserve(entries.size());
    for (LabelId e : entries) {
        if (e != label) {
            out.push_back(e);
        }
    }
    return collapse_separators(out);
}

/// Entry list after the adaptation, or nullopt when it does not apply.
inline std::optional<std::vector<LabelId>> apply_entries(const MenuDesign& d, const Adaptation& x)
{
    const auto& entries = d.entries();
    switch (x.kind) {
    case AdaptationKind::no_change: return entries;
    case AdaptationKind::move_item: {
        if (d.item_index(x.label_a) == 0) {
            return std::nullopt;
        }
        auto base = without_item(entries, x.label_a);
        if (x.a < 1 || static_cast<std::size_t>(x.a) > base.size() + 1) {
            return std::nullopt;
        }
        base.insert(base.begin() + (x.a - 1), x.label_a);
        return base;
    }
    case AdaptationKind::swap_items: {
        if (d.item_index(x.label_a) == 0 || d.item_index(x.label_b) == 0 || x.label_a == x.label_b) {
            return std::nullopt;
        }
        auto out = entries;
        for (LabelId& e : out) {
            if (e == x.label_a) {
                e = x.label_b;
            } else if (e == x.label_b) {
                e = x.label_a;
            }
        }
        return out;
    }
    case AdaptationKind::add_separator: {
        if (x.a < 1 || x.a >= d.item_count()) {
            return std::nullopt;
        }
        const int row = d.row_index(d.item_at(x.a));  // 1-based row of the item
        if (entries[static_cast<std::size_t>(row)] == kSeparator) {
            return std::nullopt;
        }
        auto out = entries;
        out.insert(out.begin() + row, kSeparator);
        return out;
    }
    case AdaptationKind::remove_separator: {
        int seen = 0;
        for (std::size_t i = 0; i < entries.size(); ++i) {
            if (entries[i] == kSeparator && ++seen == x.a) {
                auto out = entries;
                out.erase(out.begin() + static_cast<std::ptrdiff_t>(i));
                return out;
            }
        }
        return std::nullopt;
    }
    case AdaptationKind::move_group: {
        auto gs = split_groups(entries);
        const auto n = static_cast<int>(gs.size());
        if (x.a < 1 || x.a > n || x.b < 1 || x.b > n) {
            return std::nullopt;
        }
        auto moved = std::move(gs[static_cast<std::size_t>(x.a - 1)]);
        gs.erase(gs.begin() + (x.a - 1));
        gs.insert(gs.begin() + (x.b - 1), std::move(moved));
        return join_groups(gs);
    }
    case AdaptationKind::swap_groups: {
        auto gs = split_groups(entries);
        const auto n = static_cast<int>(gs.size());
        if (x.a < 1 || x.b > n || x.a >= x.b) {
            return std::nullopt;
        }
        std::swap(gs[static_cast<std::size_t>(x.a - 1)], gs[static_cast<std::size_t>(x.b - 1)]);
        return join_groups(gs);
    }
    }
    return std::nullopt;
}

inline bool valid_entries(const std::vector<LabelId>& entries, int max_separators)
{
    if (entries.empty() || entries.front() == kSeparator || entries.back() == kSeparator) {
        return false;
    }
    int seps = 0;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (entries[i] == kSeparator) {
            ++seps;
            if (i > 0 && entries[i - 1] == kSeparator) {
                return false;
            }
        }
    }
    return seps <= max_separators;
}

}  // namespace detail

inline MenuDesign apply(const MenuDesign& design, const Adaptation& x, int max_separators = kDefaultMaxSeparators)
{
    auto entries = detail::apply_entries(design, x);
    if (!entries || !detail::valid_entries(*entries, max_separators)) {
        throw InfeasibleAdaptation(std::string("infeasible adaptation: ") + to_string(x.kind));
    }
    return MenuDesign(std::move(*entries), design.catalog_ptr());
}

struct Candidate
{
    Adaptation adaptation;
    MenuDesign design;
};

/// Every feasible adaptation with its resulting design, one entry per distinct
/// resulting design. NoChange comes first; the rest follow in kind order.
inline std::vector<Candidate> enumerate_candidates(const MenuDesign& design,
                                                   int max_separators = kDefaultMaxSeparators)
{
    std::vector<Candidate> out;
    std::set<std::vector<LabelId>> seen;
    seen.insert(design.entries());
    out.push_back({Adaptation::no_change(), design});

    auto offer = [&](const Adaptation& x) {
        auto entries = detail::apply_entries(design, x);
        if (!entries || !detail::valid_entries(*entries, max_separators)) {
            return;
        }
        if (!seen.insert(*entries).second) {
            return;
        }
        out.push_back({x, MenuDesign(std::move(*entries), design.catalog_ptr())});
    };

    const auto& items = design.items();
    const int n = design.item_count();
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            offer(Adaptation::swap_items(items[static_cast<std::size_t>(i)], items[static_cast<std::size_t>(j)]));
        }
    }
    for (LabelId label : items) {
        const auto slots = detail::without_item(design.entries(), label).size() + 1;
        for (std::size_t to = 1; to <= slots; ++to) {
            offer(Adaptation::move_item(label, static_cast<int>(to)));
        }
    }
    for (int k = 1; k < n; ++k) {
        offer(Adaptation::add_separator(k));
    }
    for (int s = 1; s <= design.separator_count(); ++s) {
        offer(Adaptation::remove_separator(s));
    }
    const int n_groups = design.separator_count() + 1;
    for (int g = 1; g <= n_groups; ++g) {
        for (int to = 1; to <= n_groups; ++to) {
            if (to != g) {
                offer(Adaptation::move_group(g, to));
            }
        }
    }
    for (int i = 1; i <= n_groups; ++i) {
        for (int j = i + 1; j <= n_groups; ++j) {
            offer(Adaptation::swap_groups(i, j));
        }
    }
    return out;
}

inline std::vector<Adaptation> enumerate(const MenuDesign& design, int max_separators = kDefaultMaxSeparators)
{
    std::vector<Adaptation> out;
    for (auto& c : enumerate_candidates(design, max_separators)) {
        out.push_back(c.adaptation);
    }
    return out;
}

/*************************************************************************************************/
inline constexpr int kDefaultSessionLength = 20;

/// Samples `n_clicks` selections from the user's interest on the current
/// design, logs them one trial apart, re-estimates interest from the new
/// session, and marks the design as seen.
inline InteractionState simulate_session(const InteractionState& state, int n_clicks, std::uint64_t seed)
{
    if (n_clicks < 0) {
        throw std::invalid_argument("simulate_session: negative click count");
    }
    InteractionState out = state;
    out.expected_design = state.design;
    if (n_clicks == 0) {
        return out;
    }
    const auto& design = state.design;
    std::vector<double> weights(state.user.interest.size(), 0.0);
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (design.item_index(static_cast<LabelId>(i)) != 0) {
            weights[i] = state.user.interest[i];
        }
    }
    Rng rng(seed);
    std::vector<double> counts(weights.size(), 0.0);
    out.user.log.reserve(out.user.log.size() + static_cast<std::size_t>(n_clicks));
    for (int k = 0; k < n_clicks; ++k) {
        const auto label = static_cast<LabelId>(rng.weighted(weights));
        out.user.log.push_back(Click{label, design.item_index(label), out.user.now});
        out.user.now += 1;
        counts[static_cast<std::size_t>(label)] += 1.0;
    }
    for (double& c : counts) {
        c /= static_cast<double>(n_clicks);
    }
    out.user.interest = std::move(counts);
    return out;
}

inline InteractionState transition_to(const InteractionState& state, const MenuDesign& design, bool visible,
                                      int session_length, std::uint64_t seed)
{
    if (!visible) {
        return InteractionState{design, state.user, state.expected_design};
    }
    InteractionState shown{design, state.user, state.expected_design};
    return simulate_session(shown, session_length, seed);
}

inline InteractionState transition(const InteractionState& state, const Adaptation& x, int session_length,
                                   std::uint64_t seed, int max_separators = kDefaultMaxSeparators)
{
    return transition_to(state, apply(state.design, x, max_separators), x.visible, session_length, seed);
}

}  // namespace adaptmenu
