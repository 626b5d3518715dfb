#pragma once

// Technical-evaluation harness: the menu-size x design x history suite,
// the Static and Frequency comparators, a simulated multi-block A/B run,
// and a planning-depth timing sweep. Trials run sequentially.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "adaptation.hpp"
#include "core.hpp"
#include "planner.hpp"
#include "random.hpp"
#include "user_model.hpp"
#include "workload.hpp"

namespace adaptmenu {

struct EvalConfig
{
    std::vector<int> menu_sizes{5, 10, 15};
    int designs_per_size = 4;
    int histories_per_design = 8;
    double zipf_shape = 1.5;
    int history_clicks = 60;
    int session_window = 20;
    std::uint64_t seed = 2021;
    PlannerConfig planner;
    ModelParams params;

    std::size_t trial_count() const
    {
        return menu_sizes.size() * static_cast<std::size_t>(designs_per_size)
               * static_cast<std::size_t>(histories_per_design);
    }
};

inline void to_json(json& j, const EvalConfig& c)
{
    j = json{{"menu_sizes", c.menu_sizes},
             {"designs_per_size", c.designs_per_size},
             {"histories_per_design", c.histories_per_design},
             {"zipf_shape", c.zipf_shape},
             {"history_clicks", c.history_clicks},
             {"session_window", c.session_window},
             {"seed", c.seed},
             {"planner", c.planner},
             {"params", c.params}};
}

inline std::optional<std::string> validate_eval(const EvalConfig& c)
{
    if (c.menu_sizes.empty()) return "no menu sizes";
    for (int n : c.menu_sizes) {
        if (n < 1) return "menu sizes must be at least 1";
    }
    if (c.designs_per_size < 1 || c.histories_per_design < 1) return "design and history counts must be at least 1";
    if (!(c.zipf_shape > 0)) return "zipf shape must be positive";
    if (c.history_clicks < 1 || c.session_window < 1) return "history clicks and session window must be positive";
    if (auto err = validate_config(c.planner)) return err;
    return validate_params(c.params);
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(const std::string& s)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string config_hash(const EvalConfig& c)
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(json(c).dump())));
    return buf;
}

struct TrialSpec
{
    std::string id;
    int menu_size = 0;
    int design_index = 0;
    int history_index = 0;
    InteractionState state;
    std::uint64_t planner_seed = 0;
};

/// Every configuration of the suite. Each design and history has its own
/// derived seed, so a configuration does not depend on which others run.
inline std::vector<TrialSpec> make_trials(const EvalConfig& c)
{
    if (auto err = validate_eval(c)) {
        throw std::invalid_argument("eval config: " + *err);
    }
    std::vector<TrialSpec> out;
    for (int size : c.menu_sizes) {
        for (int d = 0; d < c.designs_per_size; ++d) {
            const auto design_seed = mix_seed(c.seed, (static_cast<std::uint64_t>(size) << 16) | static_cast<std::uint64_t>(d));
            Rng design_rng(design_seed);
            const auto design = random_design(size, design_rng, c.planner.max_separators);
            for (int h = 0; h < c.histories_per_design; ++h) {
                Rng history_rng(mix_seed(design_seed, static_cast<std::uint64_t>(h) + 1));
                auto log = zipf_history(design, c.zipf_shape, c.history_clicks, history_rng);
                auto user = user_from_history(std::move(log), static_cast<std::size_t>(c.session_window),
                                              design.catalog().size());
                char id[32];
                std::snprintf(id, sizeof id, "s%02d-d%d-h%d", size, d, h);
                out.push_back(TrialSpec{id, size, d, h, make_state(design, std::move(user)), history_rng.next()});
            }
        }
    }
    return out;
}

/*************************************************************************************************/
enum class Policy { mcts, frequency, static_menu };

inline const char* to_string(Policy p)
{
    switch (p) {
    case Policy::mcts: return "mcts";
    case Policy::frequency: return "frequency";
    case Policy::static_menu: return "static";
    }
    return "?";
}

inline Policy policy_from_string(const std::string& s)
{
    if (s == "mcts") return Policy::mcts;
    if (s == "frequency") return Policy::frequency;
    if (s == "static") return Policy::static_menu;
    throw std::invalid_argument("unknown policy: " + s);
}

/// Items sorted by descending click count in the user's last session, ties
/// by current order; separators keep their rows.
inline MenuDesign frequency_design(const MenuDesign& design, const UserState& user)
{
    auto items = design.items();
    auto count = [&](LabelId l) {
        return static_cast<std::size_t>(l) < user.interest.size() ? user.interest[static_cast<std::size_t>(l)] : 0.0;
    };
    std::stable_sort(items.begin(), items.end(), [&](LabelId a, LabelId b) { return count(a) > count(b); });
    std::vector<LabelId> entries;
    std::size_t next = 0;
    for (LabelId e : design.entries()) {
        entries.push_back(e == kSeparator ? kSeparator : items[next++]);
    }
    return MenuDesign(std::move(entries), design.catalog_ptr());
}

struct TrialResult
{
    std::string config_id;
    Policy policy = Policy::mcts;
    int menu_size = 0;
    int design_index = 0;
    int history_index = 0;
    double time_before = 0.0;  ///< interest-weighted selection time averaged over strategies
    double time_after = 0.0;   ///< same, on the first exposure to the chosen design
    bool success = false;
    std::vector<Adaptation> chosen;
    RewardVector predicted;
    MenuDesign final_design;
    double wall_time = 0.0;
};

inline TrialResult run_trial(const TrialSpec& spec, const EvalConfig& c, Policy policy,
                             const ValueEstimator* estimator = nullptr)
{
    const auto start = std::chrono::steady_clock::now();
    TrialResult r;
    r.config_id = spec.id;
    r.policy = policy;
    r.menu_size = spec.menu_size;
    r.design_index = spec.design_index;
    r.history_index = spec.history_index;
    MenuDesign after = spec.state.design;
    switch (policy) {
    case Policy::mcts: {
        PlannerConfig pc = c.planner;
        pc.seed = spec.planner_seed;
        const auto res = plan(spec.state, pc, c.params, estimator);
        after = res.final_design;
        r.chosen = res.chosen;
        r.predicted = res.predicted;
        break;
    }
    case Policy::frequency:
        after = frequency_design(spec.state.design, spec.state.user);
        break;
    case Policy::static_menu:
        break;
    }
    r.time_before = expected_selection_time(spec.state, c.params).mean();
    r.time_after = expected_selection_time(presented(spec.state, after), c.params).mean();
    r.success = r.time_after < r.time_before;
    if (policy != Policy::mcts) {
        r.predicted = reward(spec.state, after, c.params);
    }
    r.final_design = std::move(after);
    r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return r;
}

inline std::vector<TrialResult> run_suite(const EvalConfig& c, Policy policy = Policy::mcts,
                                          const ValueEstimator* estimator = nullptr)
{
    std::vector<TrialResult> out;
    for (const auto& spec : make_trials(c)) {
        out.push_back(run_trial(spec, c, policy, estimator));
    }
    return out;
}

inline std::vector<TrialResult> run_baseline(Policy policy, const EvalConfig& c)
{
    if (policy == Policy::mcts) {
        throw std::invalid_argument("run_baseline: mcts is not a baseline");
    }
    return run_suite(c, policy);
}

/*************************************************************************************************/
inline constexpr int kCsvVersion = 1;

namespace detail {

inline std::string num(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

inline std::string chosen_text(const std::vector<Adaptation>& chosen, const Catalog& catalog)
{
    std::string out;
    for (const auto& a : chosen) {
        if (!out.empty()) {
            out += ';';
        }
        out += adaptation_to_json(a, catalog).dump();
    }
    // Quote for CSV: embedded quotes doubled.
    std::string q = "\"";
    for (char ch : out) {
        q += ch;
        if (ch == '"') {
            q += '"';
        }
    }
    return q + "\"";
}

}  // namespace detail

/// Versioned CSV. The wall-time column is last so it can be dropped when
/// comparing runs.
inline void write_trials_csv(std::ostream& out, const std::vector<TrialResult>& rows, bool wall_time = true)
{
    out << "# adaptmenu trials v" << kCsvVersion << '\n';
    out << "config_id,policy,menu_size,design_index,history_index,time_before,time_after,success,"
           "predicted_serial,predicted_forage,predicted_recall,chosen";
    out << (wall_time ? ",wall_time_s\n" : "\n");
    for (const auto& r : rows) {
        out << r.config_id << ',' << to_string(r.policy) << ',' << r.menu_size << ',' << r.design_index << ','
            << r.history_index << ',' << detail::num(r.time_before) << ',' << detail::num(r.time_after) << ','
            << (r.success ? 1 : 0) << ',' << detail::num(r.predicted.serial) << ','
            << detail::num(r.predicted.forage) << ',' << detail::num(r.predicted.recall) << ','
            << detail::chosen_text(r.chosen, r.final_design.catalog());
        if (wall_time) {
            out << ',' << detail::num(r.wall_time);
        }
        out << '\n';
    }
}

struct SuiteSummary
{
    std::size_t trials = 0;
    std::size_t successes = 0;
    double success_rate = 0.0;
    double mean_improvement = 0.0;
    std::map<int, double> success_by_size;
    double wall_time = 0.0;
};

inline SuiteSummary summarize(const std::vector<TrialResult>& rows)
{
    SuiteSummary s;
    std::map<int, std::pair<int, int>> by_size;
    for (const auto& r : rows) {
        ++s.trials;
        s.successes += r.success ? 1 : 0;
        s.mean_improvement += r.time_before - r.time_after;
        s.wall_time += r.wall_time;
        auto& b = by_size[r.menu_size];
        b.first += r.success ? 1 : 0;
        b.second += 1;
    }
    if (s.trials > 0) {
        s.success_rate = static_cast<double>(s.successes) / static_cast<double>(s.trials);
        s.mean_improvement /= static_cast<double>(s.trials);
    }
    for (const auto& [size, b] : by_size) {
        s.success_by_size[size] = static_cast<double>(b.first) / b.second;
    }
    return s;
}

inline json summary_json(const EvalConfig& c, Policy policy, const std::vector<TrialResult>& rows,
                         bool wall_time = true)
{
    const auto s = summarize(rows);
    json by_size = json::object();
    for (const auto& [size, rate] : s.success_by_size) {
        by_size[std::to_string(size)] = rate;
    }
    json j{{"format", "adaptmenu-summary"},
           {"version", kCsvVersion},
           {"config_hash", config_hash(c)},
           {"config", c},
           {"policy", to_string(policy)},
           {"trials", s.trials},
           {"successes", s.successes},
           {"success_rate", s.success_rate},
           {"success_by_size", by_size},
           {"mean_improvement", s.mean_improvement}};
    if (wall_time) {
        j["wall_time_s"] = s.wall_time;
    }
    return j;
}

/*************************************************************************************************/
/// Multi-block simulated use of one configuration under each policy. Every
/// policy sees the same simulated sessions (same seeds, same sampled labels).
struct ABRow
{
    std::string config_id;
    int menu_size = 0;
    std::map<Policy, double> mean_time;  ///< average over blocks of the presented design's selection time
};

inline std::vector<ABRow> run_ab(const EvalConfig& c, int blocks = 3, const ValueEstimator* estimator = nullptr)
{
    std::vector<ABRow> out;
    for (const auto& spec : make_trials(c)) {
        ABRow row{spec.id, spec.menu_size, {}};
        for (Policy policy : {Policy::mcts, Policy::frequency, Policy::static_menu}) {
            InteractionState state = spec.state;
            double total = 0.0;
            for (int b = 0; b < blocks; ++b) {
                MenuDesign next = state.design;
                if (policy == Policy::mcts) {
                    PlannerConfig pc = c.planner;
                    pc.seed = mix_seed(spec.planner_seed, static_cast<std::uint64_t>(b));
                    next = plan(state, pc, c.params, estimator).final_design;
                } else if (policy == Policy::frequency) {
                    next = frequency_design(state.design, state.user);
                }
                total += expected_selection_time(presented(state, next), c.params).mean();
                state = transition_to(state, next, true, c.planner.session_length,
                                      mix_seed(spec.planner_seed ^ 0xab, static_cast<std::uint64_t>(b)));
            }
            row.mean_time[policy] = total / blocks;
        }
        out.push_back(std::move(row));
    }
    return out;
}

inline json ab_summary_json(const std::vector<ABRow>& rows)
{
    std::map<Policy, double> mean;
    std::size_t mcts_not_worse = 0;
    for (const auto& r : rows) {
        for (const auto& [p, t] : r.mean_time) {
            mean[p] += t / static_cast<double>(rows.size());
        }
        if (r.mean_time.at(Policy::mcts) <= r.mean_time.at(Policy::static_menu) + 1e-9) {
            ++mcts_not_worse;
        }
    }
    json policies = json::object();
    for (const auto& [p, t] : mean) {
        policies[to_string(p)] = {{"mean_selection_time", t}};
    }
    return json{{"configs", rows.size()},
                {"policies", policies},
                {"mcts_not_worse_than_static", mcts_not_worse},
                {"mcts_not_worse_rate", rows.empty() ? 0.0 : static_cast<double>(mcts_not_worse) / rows.size()}};
}

/*************************************************************************************************/
struct DepthTiming
{
    int horizon = 0;
    double wall_time = 0.0;
    double success_rate = 0.0;
};

/// Total planning time over the suite at each horizon.
inline std::vector<DepthTiming> depth_sweep(EvalConfig c, const std::vector<int>& depths,
                                            const ValueEstimator* estimator = nullptr)
{
    std::vector<DepthTiming> out;
    for (int h : depths) {
        c.planner.horizon = h;
        const auto rows = run_suite(c, Policy::mcts, estimator);
        const auto s = summarize(rows);
        out.push_back(DepthTiming{h, s.wall_time, s.success_rate});
    }
    return out;
}

}  // namespace adaptmenu
