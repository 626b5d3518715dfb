#pragma once

// Monte Carlo tree search over sequences of menu adaptations.
//
// Each iteration selects a node by UCT, expands one untried adaptation,
// estimates the value of the new node either with a random rollout scored
// by the search models or with a learned value estimator, and backs the
// per-strategy reward vector up to the root. Node values are scalarized by
// the configured objective. The final choice is the root child with the
// best mean value; invisible edges are followed until the change becomes
// visible, so the user sees one composite change.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "adaptation.hpp"
#include "core.hpp"
#include "random.hpp"
#include "user_model.hpp"

namespace adaptmenu {

enum class Objective { average, optimistic, conservative };
enum class RewardSource { simulation, value_network };
enum class VisibilitySchedule { alternate, all_visible };

inline const char* to_string(Objective o)
{
    switch (o) {
    case Objective::average: return "average";
    case Objective::optimistic: return "optimistic";
    case Objective::conservative: return "conservative";
    }
    return "?";
}

inline Objective objective_from_string(const std::string& s)
{
    if (s == "average") return Objective::average;
    if (s == "optimistic") return Objective::optimistic;
    if (s == "conservative") return Objective::conservative;
    throw std::invalid_argument("unknown objective: " + s);
}

inline const char* to_string(RewardSource r)
{
    return r == RewardSource::simulation ? "simulation" : "value-network";
}

inline RewardSource reward_source_from_string(const std::string& s)
{
    if (s == "simulation" || s == "sim") return RewardSource::simulation;
    if (s == "value-network" || s == "value-net" || s == "value_network") return RewardSource::value_network;
    throw std::invalid_argument("unknown reward source: " + s);
}

struct PlannerConfig
{
    int iterations = 400;
    int horizon = 4;
    double exploration = 1.0 / std::sqrt(2.0);
    Objective objective = Objective::average;
    double discount = 0.2;
    double conservative_penalty = 2.0;
    RewardSource reward_source = RewardSource::simulation;
    std::uint64_t seed = 0;
    int session_length = kDefaultSessionLength;
    int max_separators = kDefaultMaxSeparators;
    VisibilitySchedule visibility = VisibilitySchedule::alternate;
    int rollouts_per_leaf = 1;
    bool normalize_values = true;  ///< UCT sees values relative to the root's selection time
};

inline std::optional<std::string> validate_config(const PlannerConfig& c)
{
    if (c.iterations < 1) return "iterations must be at least 1";
    if (c.horizon < 1) return "horizon must be at least 1";
    if (!(c.exploration >= 0)) return "exploration must be non-negative";
    if (!(c.discount > 0 && c.discount <= 1)) return "discount must lie in (0, 1]";
    if (!(c.conservative_penalty >= 1)) return "conservative penalty must be at least 1";
    if (c.session_length < 0) return "session length must be non-negative";
    if (c.rollouts_per_leaf < 1) return "rollouts per leaf must be at least 1";
    return std::nullopt;
}

inline void to_json(json& j, const PlannerConfig& c)
{
    j = json{{"iterations", c.iterations},
             {"horizon", c.horizon},
             {"exploration", c.exploration},
             {"objective", to_string(c.objective)},
             {"discount", c.discount},
             {"conservative_penalty", c.conservative_penalty},
             {"reward_source", to_string(c.reward_source)},
             {"seed", c.seed},
             {"session_length", c.session_length},
             {"max_separators", c.max_separators},
             {"visibility", c.visibility == VisibilitySchedule::alternate ? "alternate" : "all-visible"},
             {"rollouts_per_leaf", c.rollouts_per_leaf},
             {"normalize_values", c.normalize_values}};
}

/// Fields present in `j` override the current values of `c`.
inline void from_json(const json& j, PlannerConfig& c)
{
    c.iterations = j.value("iterations", c.iterations);
    c.horizon = j.value("horizon", c.horizon);
    c.exploration = j.value("exploration", c.exploration);
    if (j.contains("objective")) c.objective = objective_from_string(j.at("objective").get<std::string>());
    c.discount = j.value("discount", c.discount);
    c.conservative_penalty = j.value("conservative_penalty", c.conservative_penalty);
    if (j.contains("reward_source")) c.reward_source = reward_source_from_string(j.at("reward_source").get<std::string>());
    c.seed = j.value("seed", c.seed);
    c.session_length = j.value("session_length", c.session_length);
    c.max_separators = j.value("max_separators", c.max_separators);
    if (j.contains("visibility")) {
        const auto v = j.at("visibility").get<std::string>();
        if (v == "alternate") c.visibility = VisibilitySchedule::alternate;
        else if (v == "all-visible") c.visibility = VisibilitySchedule::all_visible;
        else throw std::invalid_argument("unknown visibility schedule: " + v);
    }
    c.rollouts_per_leaf = j.value("rollouts_per_leaf", c.rollouts_per_leaf);
    c.normalize_values = j.value("normalize_values", c.normalize_values);
}

/// Scalar value of a reward vector under an objective. Conservative takes the
/// worst strategy and multiplies a negative worst case by `penalty`.
inline double combine(const RewardVector& v, Objective objective, double penalty = 2.0)
{
    switch (objective) {
    case Objective::average: return v.mean();
    case Objective::optimistic: return v.max();
    case Objective::conservative: {
        const double m = v.min();
        return m >= 0.0 ? m : penalty * m;
    }
    }
    throw std::invalid_argument("unknown objective");
}

inline double uct_score(double total_reward, int visits, int parent_visits, double exploration)
{
    return total_reward / visits
           + exploration * std::sqrt(std::log(static_cast<double>(parent_visits)) / visits);
}

/// Learned replacement for rollouts: value of showing `after` in `before`.
class ValueEstimator
{
public:
    virtual ~ValueEstimator() = default;
    virtual RewardVector estimate(const InteractionState& before, const MenuDesign& after) const = 0;
};

/*************************************************************************************************/
struct SearchNode
{
    InteractionState state;
    std::optional<Adaptation> incoming;
    int parent = -1;
    int depth = 0;
    int n = 0;
    double r = 0.0;
    RewardVector reward_vec_sum;
    RewardVector path_reward;  ///< discounted edge rewards from the root to here
    std::optional<RewardVector> leaf_estimate;
    std::vector<int> children;
    std::vector<Candidate> untried;
    bool untried_ready = false;
    int leaf_visits = 0;  ///< iterations that ended their descent at this node

    double mean() const { return n > 0 ? r / n : 0.0; }
};

/// Random walk of visible adaptations for `depth` steps, accumulating the
/// discounted per-strategy reward of every step.
inline RewardVector rollout(InteractionState state, int depth, Rng& rng, const ModelParams& params,
                            const PlannerConfig& config)
{
    RewardVector total;
    double weight = 1.0;
    for (int step = 0; step < depth; ++step) {
        auto candidates = enumerate_candidates(state.design, config.max_separators);
        const auto& pick = candidates[rng.index(candidates.size())];
        total += weight * reward(state, pick.design, params);
        state = transition_to(state, pick.design, true, config.session_length, rng.next());
        weight *= config.discount;
    }
    return total;
}

struct PlanResult
{
    std::vector<Adaptation> chosen;
    MenuDesign final_design;
    RewardVector predicted;
    double value = 0.0;
    int iterations = 0;
    int root_visits = 0;
    int tree_size = 0;
};

inline json plan_result_to_json(const PlanResult& p)
{
    json chosen = json::array();
    for (const auto& a : p.chosen) {
        chosen.push_back(adaptation_to_json(a, p.final_design.catalog()));
    }
    return json{{"chosen", chosen},
                {"predicted_reward", p.predicted},
                {"iterations", p.iterations},
                {"root_visits", p.root_visits},
                {"tree_size", p.tree_size},
                {"value", p.value},
                {"menu", design_to_json(p.final_design)}};
}

class Planner
{
public:
    Planner(InteractionState root, PlannerConfig config, ModelParams params,
            const ValueEstimator* estimator = nullptr)
        : config_(config), params_(params), estimator_(estimator), rng_(config.seed)
    {
        if (auto err = validate_config(config_)) {
            throw std::invalid_argument("planner config: " + *err);
        }
        if (config_.reward_source == RewardSource::value_network && estimator_ == nullptr) {
            throw std::invalid_argument("planner config: value-network reward source without a model");
        }
        SearchNode top;
        top.state = std::move(root);
        nodes_.push_back(std::move(top));
        if (config_.normalize_values) {
            value_scale_ = std::max(expected_selection_time(nodes_.front().state, params_).mean(), 1e-9);
        }
    }

    const std::vector<SearchNode>& nodes() const noexcept { return nodes_; }
    const SearchNode& node(int i) const { return nodes_.at(static_cast<std::size_t>(i)); }
    const PlannerConfig& config() const noexcept { return config_; }
    int completed_iterations() const noexcept { return completed_; }

    /// Descends by UCT until a node with untried adaptations or at the horizon.
    int select()
    {
        int current = 0;
        for (;;) {
            auto& nd = nodes_[static_cast<std::size_t>(current)];
            if (nd.depth >= config_.horizon) {
                return current;
            }
            ensure_untried(current);
            if (!nodes_[static_cast<std::size_t>(current)].untried.empty()
                || nodes_[static_cast<std::size_t>(current)].children.empty()) {
                return current;
            }
            current = best_child(current, config_.exploration);
        }
    }

    /// Attaches one untried adaptation, drawn uniformly, as a new child.
    int expand(int parent)
    {
        ensure_untried(parent);
        auto& p = nodes_[static_cast<std::size_t>(parent)];
        if (p.untried.empty()) {
            throw std::logic_error("expand: no untried adaptations");
        }
        if (p.depth >= config_.horizon) {
            throw std::logic_error("expand: node at horizon");
        }
        const auto pick = rng_.index(p.untried.size());
        Candidate c = std::move(p.untried[pick]);
        p.untried.erase(p.untried.begin() + static_cast<std::ptrdiff_t>(pick));

        bool visible = true;
        if (config_.visibility == VisibilitySchedule::alternate && p.children.empty()
            && c.adaptation.kind != AdaptationKind::no_change) {
            visible = false;
        }
        c.adaptation.visible = visible;

        const RewardVector edge = reward(p.state, table(parent), c.design, params_);
        SearchNode child;
        child.state = transition_to(p.state, c.design, visible, config_.session_length,
                                    stream_seed(kSessionStream, p.depth + 1, 0));
        child.incoming = c.adaptation;
        child.parent = parent;
        child.depth = p.depth + 1;
        child.path_reward = p.path_reward + std::pow(config_.discount, p.depth) * edge;
        nodes_.push_back(std::move(child));
        const int id = static_cast<int>(nodes_.size()) - 1;
        nodes_[static_cast<std::size_t>(parent)].children.push_back(id);
        return id;
    }

    /// Backed-up reward vector for an iteration that ended at `leaf`.
    RewardVector evaluate(int leaf)
    {
        auto& nd = nodes_[static_cast<std::size_t>(leaf)];
        if (config_.reward_source == RewardSource::simulation || nd.parent < 0) {
            const int remaining = config_.horizon - nd.depth;
            RewardVector sum;
            for (int k = 0; k < config_.rollouts_per_leaf; ++k) {
                Rng stream(stream_seed(kRolloutStream, nd.depth, nd.leaf_visits * config_.rollouts_per_leaf + k));
                sum += rollout(nd.state, remaining, stream, params_, config_);
            }
            return nd.path_reward
                   + (std::pow(config_.discount, nd.depth) / config_.rollouts_per_leaf) * sum;
        }
        if (!nd.leaf_estimate) {
            const auto& parent = nodes_[static_cast<std::size_t>(nd.parent)];
            nd.leaf_estimate = parent.path_reward
                               + std::pow(config_.discount, parent.depth)
                                     * estimator_->estimate(parent.state, nd.state.design);
        }
        return *nd.leaf_estimate;
    }

    void backpropagate(int leaf, const RewardVector& v)
    {
        const double value = combine(v, config_.objective, config_.conservative_penalty);
        nodes_[static_cast<std::size_t>(leaf)].leaf_visits += 1;
        for (int i = leaf; i >= 0; i = nodes_[static_cast<std::size_t>(i)].parent) {
            auto& nd = nodes_[static_cast<std::size_t>(i)];
            nd.n += 1;
            nd.r += value;
            nd.reward_vec_sum += v;
        }
    }

    void iterate()
    {
        int leaf = select();
        auto& nd = nodes_[static_cast<std::size_t>(leaf)];
        if (nd.depth < config_.horizon && !nd.untried.empty()) {
            leaf = expand(leaf);
        }
        backpropagate(leaf, evaluate(leaf));
        ++completed_;
    }

    PlanResult run()
    {
        while (completed_ < config_.iterations) {
            iterate();
        }
        return result();
    }

    /// Child of `parent` maximizing UCT with the given exploration constant.
    /// Unvisited children score +inf; ties go to the earliest child.
    int best_child(int parent, double exploration) const
    {
        const auto& p = nodes_[static_cast<std::size_t>(parent)];
        int best = -1;
        double best_score = -std::numeric_limits<double>::infinity();
        for (int c : p.children) {
            const auto& ch = nodes_[static_cast<std::size_t>(c)];
            const double score = ch.n == 0 ? std::numeric_limits<double>::infinity()
                                           : uct_score(ch.r / value_scale_, ch.n, std::max(p.n, 1), exploration);
            if (best < 0 || score > best_score) {
                best = c;
                best_score = score;
            }
        }
        return best;
    }

    /// Greedy child by mean value among visited children, or -1.
    int greedy_child(int parent) const
    {
        const auto& p = nodes_[static_cast<std::size_t>(parent)];
        int best = -1;
        for (int c : p.children) {
            const auto& ch = nodes_[static_cast<std::size_t>(c)];
            if (ch.n == 0) {
                continue;
            }
            if (best < 0 || ch.mean() > nodes_[static_cast<std::size_t>(best)].mean()) {
                best = c;
            }
        }
        return best;
    }

    PlanResult result() const
    {
        PlanResult out;
        out.iterations = completed_;
        out.root_visits = nodes_.front().n;
        out.tree_size = static_cast<int>(nodes_.size());
        out.final_design = nodes_.front().state.design;
        int current = greedy_child(0);
        if (current < 0) {
            out.chosen.push_back(Adaptation::no_change());
            return out;
        }
        const auto& first = nodes_[static_cast<std::size_t>(current)];
        out.predicted = first.reward_vec_sum * (1.0 / first.n);
        out.value = first.mean();
        out.chosen.push_back(*first.incoming);
        while (!nodes_[static_cast<std::size_t>(current)].incoming->visible) {
            const int next = greedy_child(current);
            if (next < 0) {
                break;
            }
            current = next;
            const auto& x = *nodes_[static_cast<std::size_t>(current)].incoming;
            out.chosen.push_back(x);
            if (x.kind == AdaptationKind::no_change) {
                break;
            }
        }
        out.final_design = nodes_[static_cast<std::size_t>(current)].state.design;
        return out;
    }

private:
    static constexpr std::uint64_t kSessionStream = 1;
    static constexpr std::uint64_t kRolloutStream = 2;

    // Siblings share random streams (common random numbers): the k-th
    // evaluation of any node at a given depth replays the same rollout
    // draws and simulated sessions, so sibling values differ mainly by the
    // adaptation itself.
    std::uint64_t stream_seed(std::uint64_t stream, int depth, int ordinal) const
    {
        return mix_seed(mix_seed(config_.seed, stream),
                        (static_cast<std::uint64_t>(depth) << 32) | static_cast<std::uint32_t>(ordinal));
    }

    void ensure_untried(int i)
    {
        auto& nd = nodes_[static_cast<std::size_t>(i)];
        if (!nd.untried_ready) {
            nd.untried = enumerate_candidates(nd.state.design, config_.max_separators);
            nd.untried_ready = true;
        }
    }

    const ActivationTable& table(int i)
    {
        if (tables_.size() < nodes_.size()) {
            tables_.resize(nodes_.size());
        }
        auto& slot = tables_[static_cast<std::size_t>(i)];
        if (!slot) {
            const auto& nd = nodes_[static_cast<std::size_t>(i)];
            slot = std::make_unique<ActivationTable>(nd.state.user, nd.state.design.catalog().size());
        }
        return *slot;
    }

    PlannerConfig config_;
    ModelParams params_;
    const ValueEstimator* estimator_;
    Rng rng_;
    std::vector<SearchNode> nodes_;
    std::vector<std::unique_ptr<ActivationTable>> tables_;
    int completed_ = 0;
    double value_scale_ = 1.0;
};

inline PlanResult plan(const InteractionState& state, const PlannerConfig& config, const ModelParams& params,
                       const ValueEstimator* estimator = nullptr)
{
    Planner planner(state, config, params, estimator);
    return planner.run();
}

/// Independent trees with derived seeds, one per thread; root children are
/// merged by summing their statistics.
inline PlanResult plan_root_parallel(const InteractionState& state, const PlannerConfig& config,
                                     const ModelParams& params, int threads,
                                     const ValueEstimator* estimator = nullptr)
{
    if (threads <= 1) {
        return plan(state, config, params, estimator);
    }
    std::vector<std::unique_ptr<Planner>> planners;
    for (int t = 0; t < threads; ++t) {
        PlannerConfig c = config;
        c.seed = mix_seed(config.seed, static_cast<std::uint64_t>(t));
        planners.push_back(std::make_unique<Planner>(state, c, params, estimator));
    }
    {
        std::vector<std::jthread> workers;
        for (auto& p : planners) {
            workers.emplace_back([&p] { p->run(); });
        }
    }
    struct Merged
    {
        Adaptation edge;
        int n = 0;
        double r = 0.0;
        RewardVector sum;
        int owner = 0;
        int owner_visits = 0;
    };
    std::vector<Merged> merged;
    for (int t = 0; t < threads; ++t) {
        const auto& tree = *planners[static_cast<std::size_t>(t)];
        for (int c : tree.node(0).children) {
            const auto& ch = tree.node(c);
            if (ch.n == 0) {
                continue;
            }
            auto it = std::find_if(merged.begin(), merged.end(), [&](const Merged& m) { return m.edge == *ch.incoming; });
            if (it == merged.end()) {
                Merged m;
                m.edge = *ch.incoming;
                merged.push_back(std::move(m));
                it = std::prev(merged.end());
            }
            it->n += ch.n;
            it->r += ch.r;
            it->sum += ch.reward_vec_sum;
            if (ch.n > it->owner_visits) {
                it->owner = t;
                it->owner_visits = ch.n;
            }
        }
    }
    PlanResult out = planners.front()->result();
    out.iterations = 0;
    out.root_visits = 0;
    out.tree_size = 0;
    for (const auto& p : planners) {
        out.iterations += p->completed_iterations();
        out.root_visits += p->node(0).n;
        out.tree_size += static_cast<int>(p->nodes().size());
    }
    const Merged* best = nullptr;
    for (const auto& m : merged) {
        if (best == nullptr || m.r / m.n > best->r / best->n) {
            best = &m;
        }
    }
    if (best == nullptr) {
        return out;
    }
    // Follow the invisible chain inside the tree that visited the edge most.
    const auto& owner = *planners[static_cast<std::size_t>(best->owner)];
    int current = -1;
    for (int c : owner.node(0).children) {
        if (*owner.node(c).incoming == best->edge) {
            current = c;
        }
    }
    out.chosen = {best->edge};
    out.predicted = best->sum * (1.0 / best->n);
    out.value = best->r / best->n;
    while (!owner.node(current).incoming->visible) {
        const int next = owner.greedy_child(current);
        if (next < 0) {
            break;
        }
        current = next;
        out.chosen.push_back(*owner.node(current).incoming);
        if (owner.node(current).incoming->kind == AdaptationKind::no_change) {
            break;
        }
    }
    out.final_design = owner.node(current).state.design;
    return out;
}

}  // namespace adaptmenu
