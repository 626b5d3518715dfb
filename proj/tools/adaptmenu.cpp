// adaptmenu: plan menu adaptations, run the evaluation suite and baselines,
// generate value-network data, train the network, and serve live sessions.

#include <CLI11.hpp>

#include <adaptmenu/harness.hpp>
#include <adaptmenu/planner.hpp>
#include <adaptmenu/server.hpp>
#include <adaptmenu/value_net.hpp>

#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>

using namespace adaptmenu;

namespace {

json read_json(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot read " + path);
    }
    return json::parse(in);
}

void write_text(const std::string& path, const std::string& text)
{
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write " + path);
    }
    out << text;
}

// Model constants: a JSON file, then individual flags on top.
struct ParamOptions
{
    std::string file;
    std::optional<double> delta, t_c, t_trail, theta, a_p, b_p;
    std::optional<int> n_local_flat;

    void attach(CLI::App* app)
    {
        app->add_option("--params", file, "model constants JSON file");
        app->add_option("--delta", delta, "item inspection cost");
        app->add_option("--t-c", t_c, "surprise penalty");
        app->add_option("--t-trail", t_trail, "trailing pointing time");
        app->add_option("--theta", theta, "recall activation threshold");
        app->add_option("--a-p", a_p, "pointing intercept");
        app->add_option("--b-p", b_p, "pointing slope");
        app->add_option("--n-local", n_local_flat, "local search span in flat menus");
    }

    ModelParams resolve() const
    {
        ModelParams p;
        if (!file.empty()) {
            p = read_json(file).get<ModelParams>();
        }
        if (delta) p.delta = *delta;
        if (t_c) p.t_c = *t_c;
        if (t_trail) p.t_trail = *t_trail;
        if (theta) p.theta = *theta;
        if (a_p) p.a_p = *a_p;
        if (b_p) p.b_p = *b_p;
        if (n_local_flat) p.n_local_flat = *n_local_flat;
        if (auto err = validate_params(p)) {
            throw std::invalid_argument("model constants: " + *err);
        }
        return p;
    }
};

struct PlannerOptions
{
    std::optional<int> iterations, horizon, rollouts;
    std::optional<double> exploration, discount, penalty;
    std::string objective = "average";
    std::string reward_source = "simulation";
    std::string visibility = "alternate";
    std::uint64_t seed = 0;
    std::string model;

    void attach(CLI::App* app)
    {
        app->add_option("--iterations", iterations, "MCTS iterations (400)");
        app->add_option("--horizon", horizon, "planning horizon (4)");
        app->add_option("--exploration", exploration, "UCT exploration constant");
        app->add_option("--discount", discount, "per-step reward discount");
        app->add_option("--penalty", penalty, "conservative penalty on negative rewards");
        app->add_option("--rollouts", rollouts, "rollouts per leaf evaluation");
        app->add_option("--objective", objective, "average | optimistic | conservative");
        app->add_option("--reward-source", reward_source, "simulation | value-network");
        app->add_option("--visibility", visibility, "alternate | all-visible");
        app->add_option("--seed", seed, "random seed");
        app->add_option("--model", model, "trained value network (for value-network rewards)");
    }

    PlannerConfig resolve() const
    {
        PlannerConfig c;
        if (iterations) c.iterations = *iterations;
        if (horizon) c.horizon = *horizon;
        if (exploration) c.exploration = *exploration;
        if (discount) c.discount = *discount;
        if (penalty) c.conservative_penalty = *penalty;
        if (rollouts) c.rollouts_per_leaf = *rollouts;
        from_json(json{{"objective", objective}, {"reward_source", reward_source}, {"visibility", visibility}}, c);
        c.seed = seed;
        if (auto err = validate_config(c)) {
            throw std::invalid_argument("planner: " + *err);
        }
        return c;
    }

    std::unique_ptr<NetworkEstimator> estimator(const PlannerConfig& c) const
    {
        if (c.reward_source != RewardSource::value_network) {
            return nullptr;
        }
        if (model.empty()) {
            throw std::invalid_argument("value-network rewards need --model");
        }
        return std::make_unique<NetworkEstimator>(std::make_shared<const ValueModel>(load_model(model)));
    }
};

struct SuiteOptions
{
    std::vector<int> sizes{5, 10, 15};
    int designs = 4;
    int histories = 8;
    double zipf = 1.5;
    int clicks = 60;
    std::uint64_t suite_seed = 2021;
    std::string csv = "-";
    std::string summary;
    bool no_wall_time = false;

    void attach(CLI::App* app)
    {
        app->add_option("--sizes", sizes, "menu sizes")->delimiter(',');
        app->add_option("--designs", designs, "designs per size");
        app->add_option("--histories", histories, "click histories per design");
        app->add_option("--zipf", zipf, "Zipf shape of click histories");
        app->add_option("--history-clicks", clicks, "clicks per history");
        app->add_option("--suite-seed", suite_seed, "seed for menus and histories");
        app->add_option("--csv", csv, "per-trial CSV output (- for stdout)");
        app->add_option("--summary", summary, "summary JSON output");
        app->add_flag("--no-wall-time", no_wall_time, "omit wall-time fields");
    }

    EvalConfig resolve(const PlannerConfig& pc, const ModelParams& params) const
    {
        EvalConfig c;
        c.menu_sizes = sizes;
        c.designs_per_size = designs;
        c.histories_per_design = histories;
        c.zipf_shape = zipf;
        c.history_clicks = clicks;
        c.seed = suite_seed;
        c.planner = pc;
        c.params = params;
        if (auto err = validate_eval(c)) {
            throw std::invalid_argument("suite: " + *err);
        }
        return c;
    }

    void emit(const EvalConfig& c, Policy policy, const std::vector<TrialResult>& rows) const
    {
        std::ostringstream csv_text;
        write_trials_csv(csv_text, rows, !no_wall_time);
        write_text(csv, csv_text.str());
        const auto s = summary_json(c, policy, rows, !no_wall_time);
        if (!summary.empty()) {
            write_text(summary, s.dump(2) + "\n");
        }
        std::cerr << to_string(policy) << ": " << s.at("successes") << "/" << s.at("trials")
                  << " successful trials (rate " << s.at("success_rate") << ")\n";
    }
};

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Adaptive menu planner"};
    app.require_subcommand(1);

    // plan
    auto* plan_cmd = app.add_subcommand("plan", "plan one adaptation for a menu and click history");
    std::string menu_path, history_path, plan_out = "-";
    PlannerOptions plan_opts;
    ParamOptions plan_params;
    plan_cmd->add_option("--menu", menu_path, "menu design JSON")->required();
    plan_cmd->add_option("--history", history_path, "click history JSON");
    plan_cmd->add_option("--out", plan_out, "output file (- for stdout)");
    plan_opts.attach(plan_cmd);
    plan_params.attach(plan_cmd);

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "run the evaluation suite");
    PlannerOptions eval_opts;
    ParamOptions eval_params;
    SuiteOptions eval_suite;
    std::vector<int> depths;
    std::string depth_out, ab_out;
    int ab_blocks = 3;
    eval_opts.attach(eval_cmd);
    eval_params.attach(eval_cmd);
    eval_suite.attach(eval_cmd);
    eval_cmd->add_option("--depth-sweep", depths, "time planning at these horizons instead")->delimiter(',');
    eval_cmd->add_option("--depth-out", depth_out, "depth sweep JSON output (default stdout)");
    eval_cmd->add_option("--ab", ab_out, "also run the multi-block MCTS/Frequency/Static comparison, JSON output");
    eval_cmd->add_option("--ab-blocks", ab_blocks, "blocks per configuration in the comparison");

    // baseline
    auto* base_cmd = app.add_subcommand("baseline", "run the suite with a non-planning comparator");
    std::string policy_name = "static";
    ParamOptions base_params;
    SuiteOptions base_suite;
    base_cmd->add_option("--policy", policy_name, "static | frequency")->required();
    base_params.attach(base_cmd);
    base_suite.attach(base_cmd);

    // gen-data
    auto* gen_cmd = app.add_subcommand("gen-data", "generate value-network training data");
    DataGenConfig gen;
    ParamOptions gen_params;
    std::string gen_out;
    gen_cmd->add_option("--count", gen.count, "samples")->required();
    gen_cmd->add_option("--seed", gen.seed, "random seed");
    gen_cmd->add_option("--min-items", gen.min_items, "smallest menu");
    gen_cmd->add_option("--max-items", gen.max_items, "largest menu");
    gen_cmd->add_option("--zipf", gen.zipf_shape, "Zipf shape of click histories");
    gen_cmd->add_option("--history-clicks", gen.history_clicks, "clicks per history");
    gen_cmd->add_option("--warmup", gen.warmup_steps, "maximum random adaptations before sampling");
    gen_cmd->add_option("--horizon", gen.horizon, "steps covered by a target");
    gen_cmd->add_option("--discount", gen.discount, "per-step reward discount");
    gen_cmd->add_option("--rollouts", gen.rollouts, "continuations averaged per target");
    gen_cmd->add_option("--out", gen_out, "dataset file")->required();
    gen_params.attach(gen_cmd);

    // train
    auto* train_cmd = app.add_subcommand("train", "train the value network");
    TrainConfig tc;
    std::string data_path, model_out, report_out = "-";
    train_cmd->add_option("--data", data_path, "dataset file")->required();
    train_cmd->add_option("--out", model_out, "model file")->required();
    train_cmd->add_option("--report", report_out, "training report JSON (- for stdout)");
    train_cmd->add_option("--learning-rate", tc.learning_rate, "RMSProp learning rate");
    train_cmd->add_option("--decay", tc.decay, "RMSProp decay");
    train_cmd->add_option("--dropout", tc.dropout, "dropout rate");
    train_cmd->add_option("--validation", tc.validation_fraction, "held-out fraction");
    train_cmd->add_option("--epochs", tc.max_epochs, "maximum epochs");
    train_cmd->add_option("--patience", tc.patience, "early-stopping patience");
    train_cmd->add_option("--batch", tc.batch_size, "minibatch size");
    train_cmd->add_option("--seed", tc.seed, "random seed");
    train_cmd->add_option("--head-width", tc.shape.head_width, "units per input head");
    train_cmd->add_option("--trunk-width", tc.shape.trunk_width, "units in the shared layer");
    train_cmd->add_option("--tail-width", tc.shape.tail_width, "units per tail layer");

    // serve
    auto* serve_cmd = app.add_subcommand("serve", "serve live sessions over HTTP");
    std::string host = "127.0.0.1", log_path = "sessions.jsonl", serve_model;
    int port = 8080;
    ParamOptions serve_params;
    serve_cmd->add_option("--host", host, "bind address");
    serve_cmd->add_option("--port", port, "port");
    serve_cmd->add_option("--log", log_path, "append-only session log (replayed on start)");
    serve_cmd->add_option("--model", serve_model, "value network for sessions that request it");
    serve_params.attach(serve_cmd);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*plan_cmd) {
            const auto params = plan_params.resolve();
            const auto pc = plan_opts.resolve();
            const auto est = plan_opts.estimator(pc);
            const auto design = design_from_json(read_json(menu_path));
            if (auto err = validate_design(design, pc.max_separators)) {
                throw std::invalid_argument("menu: " + *err);
            }
            const auto user = history_path.empty()
                                  ? UserState{{}, 0, interest_from_log({}, kDefaultSessionLength, design.catalog().size())}
                                  : user_from_json(read_json(history_path), design);
            const auto state = make_state(design, user);
            const auto result = plan(state, pc, params, est.get());
            json out = plan_result_to_json(result);
            out["selection_time_before"] = expected_selection_time(state, params);
            out["selection_time_after"] = expected_selection_time(presented(state, result.final_design), params);
            write_text(plan_out, out.dump(2) + "\n");
        } else if (*eval_cmd) {
            const auto params = eval_params.resolve();
            const auto pc = eval_opts.resolve();
            const auto est = eval_opts.estimator(pc);
            const auto c = eval_suite.resolve(pc, params);
            if (!depths.empty()) {
                json sweep = json::array();
                for (const auto& d : depth_sweep(c, depths, est.get())) {
                    json row{{"horizon", d.horizon}, {"success_rate", d.success_rate}};
                    if (!eval_suite.no_wall_time) {
                        row["wall_time_s"] = d.wall_time;
                    }
                    sweep.push_back(row);
                }
                write_text(depth_out, json{{"config_hash", config_hash(c)}, {"sweep", sweep}}.dump(2) + "\n");
            } else {
                eval_suite.emit(c, Policy::mcts, run_suite(c, Policy::mcts, est.get()));
                if (!ab_out.empty()) {
                    write_text(ab_out, ab_summary_json(run_ab(c, ab_blocks, est.get())).dump(2) + "\n");
                }
            }
        } else if (*base_cmd) {
            const auto policy = policy_from_string(policy_name);
            const auto c = base_suite.resolve(PlannerConfig{}, base_params.resolve());
            base_suite.emit(c, policy, run_baseline(policy, c));
        } else if (*gen_cmd) {
            gen.params = gen_params.resolve();
            save_dataset(gen_out, generate_training_data(gen));
            std::cerr << "wrote " << gen.count << " samples to " << gen_out << "\n";
        } else if (*train_cmd) {
            const auto data = load_dataset(data_path);
            TrainReport report;
            const auto model = train(data, tc, &report);
            save_model(model_out, model);
            write_text(report_out, json(report).dump(2) + "\n");
        } else if (*serve_cmd) {
            std::unique_ptr<NetworkEstimator> est;
            if (!serve_model.empty()) {
                est = std::make_unique<NetworkEstimator>(std::make_shared<const ValueModel>(load_model(serve_model)));
            }
            SessionService service(log_path, serve_params.resolve(), est.get());
            std::cerr << "listening on " << host << ":" << port << " (" << service.session_count()
                      << " sessions replayed from " << log_path << ")\n";
            if (!serve(host, port, service)) {
                std::cerr << "error: cannot bind " << host << ":" << port << "\n";
                return 2;
            }
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
