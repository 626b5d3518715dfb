#pragma once

// Synthetic menus and users: category-labelled menu designs and
// Zipf-distributed click histories.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "core.hpp"
#include "random.hpp"

namespace adaptmenu {

struct CategoryVocabulary
{
    std::string name;
    std::vector<std::string> labels;
};

inline const std::vector<CategoryVocabulary>& default_vocabulary()
{
    static const std::vector<CategoryVocabulary> vocab{
        {"animals", {"Cat", "Dog", "Horse", "Rabbit", "Tiger", "Zebra", "Otter", "Goat"}},
        {"furniture", {"Chair", "Table", "Sofa", "Shelf", "Desk", "Stool", "Bench", "Dresser"}},
        {"vegetables", {"Carrot", "Potato", "Onion", "Leek", "Pepper", "Celery", "Radish", "Spinach"}},
        {"clothing", {"Gloves", "Scarf", "Jacket", "Socks", "Shirt", "Boots", "Hat", "Coat"}},
        {"fruits", {"Apple", "Banana", "Cherry", "Mango", "Pear", "Plum", "Grape", "Lemon"}},
        {"countries", {"France", "Peru", "Japan", "Kenya", "Norway", "Chile", "India", "Spain"}},
        {"tools", {"Hammer", "Wrench", "Saw", "Drill", "Pliers", "Chisel", "Level", "Clamp"}},
        {"colors", {"Red", "Blue", "Green", "Yellow", "Purple", "Orange", "Teal", "Maroon"}},
        {"drinks", {"Coffee", "Tea", "Juice", "Water", "Milk", "Cocoa", "Soda", "Cider"}},
        {"sports", {"Tennis", "Rugby", "Golf", "Hockey", "Rowing", "Judo", "Cricket", "Boxing"}},
    };
    return vocab;
}

/// Random menu of `n_items` labels drawn from a few categories, with labels
/// placed at random positions and up to `max_separators` random separators.
inline MenuDesign random_design(int n_items, Rng& rng, int max_separators = kDefaultMaxSeparators)
{
    const auto& vocab = default_vocabulary();
    const int n_categories = std::clamp((n_items + 3) / 4, 1, static_cast<int>(vocab.size()));
    std::vector<std::size_t> cats(vocab.size());
    for (std::size_t i = 0; i < cats.size(); ++i) {
        cats[i] = i;
    }
    rng.shuffle(std::span<std::size_t>(cats));
    cats.resize(static_cast<std::size_t>(n_categories));

    // Round-robin draw so every chosen category contributes.
    std::vector<std::vector<std::string>> pools;
    for (auto c : cats) {
        auto labels = vocab[c].labels;
        rng.shuffle(std::span<std::string>(labels));
        pools.push_back(std::move(labels));
    }
    std::vector<std::string> names;
    std::vector<std::vector<std::string>> categories(pools.size());
    for (int i = 0; names.size() < static_cast<std::size_t>(n_items); ++i) {
        auto& pool = pools[static_cast<std::size_t>(i) % pools.size()];
        if (pool.empty()) {
            continue;
        }
        names.push_back(pool.back());
        categories[static_cast<std::size_t>(i) % pools.size()].push_back(pool.back());
        pool.pop_back();
    }
    rng.shuffle(std::span<std::string>(names));
    auto catalog = std::make_shared<const Catalog>(names, categories);

    const int max_seps = std::min(max_separators, std::max(0, (n_items - 1) / 3));
    const int n_seps = max_seps > 0 ? static_cast<int>(rng.index(static_cast<std::size_t>(max_seps) + 1)) : 0;
    std::vector<int> gaps;
    for (int k = 1; k < n_items; ++k) {
        gaps.push_back(k);
    }
    rng.shuffle(std::span<int>(gaps));
    gaps.resize(static_cast<std::size_t>(n_seps));
    std::sort(gaps.begin(), gaps.end());

    std::vector<LabelId> entries;
    std::size_t g = 0;
    for (int k = 1; k <= n_items; ++k) {
        entries.push_back(catalog->id(names[static_cast<std::size_t>(k - 1)]));
        if (g < gaps.size() && gaps[g] == k) {
            entries.push_back(kSeparator);
            ++g;
        }
    }
    return MenuDesign(std::move(entries), catalog);
}

/// Rank probabilities proportional to rank^-shape.
inline std::vector<double> zipf_probabilities(int n, double shape)
{
    std::vector<double> p(static_cast<std::size_t>(n));
    double total = 0.0;
    for (int r = 1; r <= n; ++r) {
        p[static_cast<std::size_t>(r - 1)] = std::pow(static_cast<double>(r), -shape);
        total += p[static_cast<std::size_t>(r - 1)];
    }
    for (double& v : p) {
        v /= total;
    }
    return p;
}

/// Per-label Zipf weights over the design's items under a random rank order.
inline std::vector<double> zipf_interest(const MenuDesign& design, double shape, Rng& rng)
{
    auto ranked = design.items();
    rng.shuffle(std::span<LabelId>(ranked));
    const auto probs = zipf_probabilities(design.item_count(), shape);
    std::vector<double> out(design.catalog().size(), 0.0);
    for (std::size_t r = 0; r < ranked.size(); ++r) {
        out[static_cast<std::size_t>(ranked[r])] = probs[r];
    }
    return out;
}

/// Clicks at trial times 0..n_clicks-1 on the design, labels drawn from a
/// Zipf law with a random rank-to-label assignment.
inline ClickLog zipf_history(const MenuDesign& design, double shape, int n_clicks, Rng& rng)
{
    const auto weights = zipf_interest(design, shape, rng);
    ClickLog log;
    for (int t = 0; t < n_clicks; ++t) {
        const auto label = static_cast<LabelId>(rng.weighted(weights));
        log.push_back(Click{label, design.item_index(label), t});
    }
    return log;
}

inline UserState user_from_history(ClickLog log, std::size_t session_window, std::size_t n_labels)
{
    UserState user;
    user.now = log.empty() ? 0 : log.back().time + 1;
    user.interest = interest_from_log(log, session_window, n_labels);
    user.log = std::move(log);
    return user;
}

}  // namespace adaptmenu
