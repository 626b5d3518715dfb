// Helpers shared by the unit and acceptance tests: terse menu builders and
// independent re-implementations used as oracles.
#pragma once

#include <adaptmenu/adaptation.hpp>
#include <adaptmenu/core.hpp>
#include <adaptmenu/planner.hpp>
#include <adaptmenu/random.hpp>
#include <adaptmenu/user_model.hpp>

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

namespace testsupport {

using namespace adaptmenu;

/// Random cases per property test.
inline constexpr int kCases = 1000;

/// Design from labels; "|" marks a separator.
inline MenuDesign menu(const std::vector<std::string>& entries,
                       const std::vector<std::vector<std::string>>& categories = {})
{
    json items = json::array();
    for (const auto& e : entries) {
        items.push_back(e == "|" ? std::string(kSeparatorToken) : e);
    }
    return design_from_json(json{{"items", items}, {"categories", categories}});
}

/// Same catalog, new order.
inline MenuDesign reorder(const MenuDesign& d, const std::vector<std::string>& entries)
{
    std::vector<LabelId> out;
    for (const auto& e : entries) {
        out.push_back(e == "|" ? kSeparator : d.catalog().id(e));
    }
    return MenuDesign(std::move(out), d.catalog_ptr());
}

inline LabelId id(const MenuDesign& d, const std::string& name) { return d.catalog().id(name); }

/// Fresh user with no history and all interest on the given labels.
inline UserState user_with_interest(const MenuDesign& d, const std::vector<std::pair<std::string, double>>& mass)
{
    UserState u;
    u.interest.assign(d.catalog().size(), 0.0);
    for (const auto& [name, p] : mass) {
        u.interest[static_cast<std::size_t>(id(d, name))] = p;
    }
    return u;
}

/// Random valid design over `n` labels with random categories and separators.
inline MenuDesign random_small_design(int n, Rng& rng, int max_separators = kDefaultMaxSeparators)
{
    std::vector<std::string> names;
    for (int i = 0; i < n; ++i) {
        names.push_back(std::string(1, static_cast<char>('a' + i)));
    }
    std::vector<std::vector<std::string>> cats(1 + rng.index(3));
    for (const auto& nm : names) {
        if (rng.uniform() < 0.85) {
            cats[rng.index(cats.size())].push_back(nm);
        }
    }
    auto catalog = std::make_shared<const Catalog>(names, cats);
    std::vector<LabelId> ids;
    for (int i = 0; i < n; ++i) {
        ids.push_back(static_cast<LabelId>(i));
    }
    rng.shuffle(std::span<LabelId>(ids));
    std::vector<LabelId> entries;
    int seps = 0;
    for (int i = 0; i < n; ++i) {
        if (i > 0 && seps < max_separators && rng.uniform() < 0.3) {
            entries.push_back(kSeparator);
            ++seps;
        }
        entries.push_back(ids[static_cast<std::size_t>(i)]);
    }
    return MenuDesign(std::move(entries), catalog);
}

/// Random state on a ≤ `max_items` menu: the expected design is a random
/// permutation of the same labels and the log mixes old and recent clicks
/// at locations that may lie beyond the current menu.
inline InteractionState random_small_state(Rng& rng, int max_items = 5)
{
    const int n = 1 + static_cast<int>(rng.index(static_cast<std::size_t>(max_items)));
    auto design = random_small_design(n, rng);
    auto expected_entries = design.items();
    rng.shuffle(std::span<LabelId>(expected_entries));
    if (n > 2 && rng.uniform() < 0.5) {
        expected_entries.insert(expected_entries.begin() + 1 + static_cast<std::ptrdiff_t>(rng.index(static_cast<std::size_t>(n - 1))),
                                kSeparator);
    }
    MenuDesign expected(expected_entries, design.catalog_ptr());
    UserState u;
    const int clicks = static_cast<int>(rng.index(12));
    for (int k = 0; k < clicks; ++k) {
        const auto label = design.items()[rng.index(static_cast<std::size_t>(n))];
        const int loc = 1 + static_cast<int>(rng.index(static_cast<std::size_t>(n + 1)));
        u.log.push_back(Click{label, loc, static_cast<std::int64_t>(k)});
    }
    u.now = clicks + static_cast<std::int64_t>(rng.index(3));
    if (u.now <= clicks - 1) {
        u.now = clicks;
    }
    u.decay = 0.3 + 0.4 * rng.uniform();
    u.interest.assign(design.catalog().size(), 0.0);
    double total = 0.0;
    for (LabelId l : design.items()) {
        u.interest[static_cast<std::size_t>(l)] = rng.uniform() + 0.01;
        total += u.interest[static_cast<std::size_t>(l)];
    }
    for (double& p : u.interest) {
        p /= total;
    }
    return InteractionState{design, u, expected};
}

/*************************************************************************************************/
// Step-by-step replay of each search process on a simple clock. Nothing here
// calls the closed-form model code; activations are summed straight from the
// click log and relatedness comes straight from the category lists.
namespace trace {

inline double activation(const UserState& u, LabelId label, int slot)
{
    double b = 0.0;
    for (const auto& c : u.log) {
        if (c.label == label && c.location == slot) {
            b += std::pow(static_cast<double>(u.now - c.time), -u.decay);
        }
    }
    return b;
}

// Every label is associated with itself, listed in a category or not.
inline bool related(const Catalog& cat, LabelId a, LabelId b)
{
    if (a == b) {
        return true;
    }
    for (const auto& group : cat.categories()) {
        const bool has_a = std::find(group.begin(), group.end(), cat.name(a)) != group.end();
        const bool has_b = std::find(group.begin(), group.end(), cat.name(b)) != group.end();
        if (has_a && has_b) {
            return true;
        }
    }
    return false;
}

struct Clock
{
    double now = 0.0;
    void spend(double dt) { now += dt; }
};

/// Item labels in display order, slot k at index k-1.
inline std::vector<LabelId> slots(const MenuDesign& d)
{
    std::vector<LabelId> out;
    for (LabelId e : d.entries()) {
        if (e != kSeparator) {
            out.push_back(e);
        }
    }
    return out;
}

inline int slot_of(const MenuDesign& d, LabelId label)
{
    const auto s = slots(d);
    return static_cast<int>(std::find(s.begin(), s.end(), label) - s.begin()) + 1;
}

inline double fitts(int slot, const ModelParams& p) { return p.a_p + p.b_p * std::log2(1.0 + slot); }

inline double look(const InteractionState& st, int slot, const ModelParams& p)
{
    const auto s = slots(st.design);
    return p.delta / (1.0 + trace::activation(st.user, s[static_cast<std::size_t>(slot - 1)], slot));
}

/// Careful walk from the top to slot `a` at constant cost, then point.
inline void cautious(Clock& clock, int a, const ModelParams& p)
{
    for (int k = 1; k <= a; ++k) {
        clock.spend(p.delta);
    }
    clock.spend(fitts(a, p));
}

inline double serial(const InteractionState& st, LabelId target, const ModelParams& p)
{
    const auto s = slots(st.design);
    const int expected = slot_of(st.expected_design, target);
    Clock clock;
    for (int k = 1; k <= static_cast<int>(s.size()); ++k) {
        clock.spend(look(st, k, p));
        if (s[static_cast<std::size_t>(k - 1)] == target) {
            clock.spend(p.t_trail);
            return clock.now;
        }
        if (k == expected) {
            // Arrived where the item used to be and it is not there.
            clock.spend(p.t_trail);
            clock.spend(p.t_c);
            const int actual = slot_of(st.design, target);
            for (int j = k + 1; j <= actual; ++j) {
                clock.spend(p.delta);
            }
            clock.spend(fitts(actual, p));
            return clock.now;
        }
    }
    return clock.now;
}

inline double forage(const InteractionState& st, LabelId target, const ModelParams& p)
{
    const auto& entries = st.design.entries();
    const auto& cat = st.design.catalog();
    Clock clock;
    int slot = 0;
    std::size_t i = 0;
    while (i < entries.size()) {
        // `i` is the anchor of a group; find the group's extent.
        std::size_t end = i;
        while (end < entries.size() && entries[end] != kSeparator) {
            ++end;
        }
        const int anchor_slot = slot + 1;
        clock.spend(look(st, anchor_slot, p));
        if (related(cat, entries[i], target)) {
            for (std::size_t k = i; k < end; ++k) {
                clock.spend(look(st, anchor_slot + static_cast<int>(k - i), p));
                if (entries[k] == target) {
                    clock.spend(p.t_trail);
                    return clock.now;
                }
            }
        }
        slot += static_cast<int>(end - i);
        i = end + 1;
    }
    clock.spend(p.t_trail);
    clock.spend(p.t_c);
    cautious(clock, slot_of(st.design, target), p);
    return clock.now;
}

inline double recall(const InteractionState& st, LabelId target, const ModelParams& p)
{
    int furthest = 0;
    for (const auto& c : st.user.log) {
        furthest = std::max(furthest, c.location);
    }
    std::vector<std::pair<double, int>> remembered;
    for (int l = 1; l <= furthest; ++l) {
        const double b = trace::activation(st.user, target, l);
        if (b >= p.theta) {
            remembered.push_back({-b, l});
        }
    }
    if (remembered.empty()) {
        return serial(st, target, p);
    }
    std::sort(remembered.begin(), remembered.end());

    const auto s = slots(st.design);
    const int n = static_cast<int>(s.size());
    const int actual = slot_of(st.design, target);
    // Group id per slot, only meaningful when the menu has separators.
    std::vector<int> group(static_cast<std::size_t>(n) + 1, 0);
    std::vector<int> group_size(1, 0);
    bool grouped = false;
    {
        int g = 0, k = 0;
        for (LabelId e : st.design.entries()) {
            if (e == kSeparator) {
                grouped = true;
                ++g;
                group_size.push_back(0);
                continue;
            }
            group[static_cast<std::size_t>(++k)] = g;
            ++group_size[static_cast<std::size_t>(g)];
        }
    }
    Clock clock;
    for (const auto& [neg_b, l] : remembered) {
        if (l > n) {
            clock.spend(p.t_c);
            continue;
        }
        clock.spend(look(st, l, p));
        if (s[static_cast<std::size_t>(l - 1)] == target) {
            clock.spend(fitts(l, p));
            return clock.now;
        }
        int span = p.n_local_flat;
        bool found = 2 * std::abs(actual - l) <= p.n_local_flat - (p.n_local_flat % 2);
        if (grouped) {
            span = group_size[static_cast<std::size_t>(group[static_cast<std::size_t>(l)])];
            found = group[static_cast<std::size_t>(l)] == group[static_cast<std::size_t>(actual)];
        }
        clock.spend(p.t_c);
        clock.spend(p.delta * span);
        clock.spend(p.t_trail);
        if (found) {
            return clock.now;
        }
    }
    cautious(clock, actual, p);
    return clock.now;
}

}  // namespace trace

/*************************************************************************************************/
/// Best one-step combined reward over every enumerated adaptation.
inline double best_one_step(const InteractionState& st, Objective objective, const ModelParams& p,
                            double penalty = 2.0)
{
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& c : enumerate_candidates(st.design)) {
        best = std::max(best, combine(reward(st, c.design, p), objective, penalty));
    }
    return best;
}

}  // namespace testsupport
