#pragma once

// Live adaptive-menu sessions over HTTP. SessionService holds the sessions
// and answers JSON requests without any socket; serve() binds it to an
// HTTP listener. Every accepted mutation is appended to a JSON-lines log
// and a restarted service replays the log to rebuild identical state.

#include <httplib.h>
// <resolv.h> (via httplib) defines _res, which collides with Eigen parameter names
#ifdef _res
#undef _res
#endif

#include <atomic>
#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "adaptation.hpp"
#include "core.hpp"
#include "planner.hpp"
#include "random.hpp"
#include "user_model.hpp"

namespace adaptmenu {

struct ApiResponse
{
    int status = 200;
    json body;
};

struct ApiError : std::runtime_error
{
    ApiError(int s, const std::string& what) : std::runtime_error(what), status(s) {}
    int status;
};

struct SessionClick
{
    std::string label;
    double timestamp = 0.0;
    int location = 0;
    int block = 0;
};

struct BlockRecord
{
    int block = 0;
    std::vector<Adaptation> adaptations;
    RewardVector predicted;
    std::string objective;
};

struct Session
{
    std::string id;
    InteractionState state;
    PlannerConfig planner;
    std::size_t session_window = kDefaultSessionLength;
    int block = 0;
    std::size_t block_start = 0;  ///< index of the block's first click in `clicks`
    std::vector<SessionClick> clicks;
    std::vector<BlockRecord> history;
    std::mutex mutex;
};

class SessionService
{
public:
    /// `log_path` empty disables persistence. An existing log is replayed.
    explicit SessionService(std::string log_path = {}, ModelParams params = {},
                            const ValueEstimator* estimator = nullptr)
        : log_path_(std::move(log_path)), params_(params), estimator_(estimator)
    {
        if (!log_path_.empty()) {
            replay();
            log_.open(log_path_, std::ios::app);
            if (!log_) {
                throw std::runtime_error("cannot open session log " + log_path_);
            }
        }
    }

    /// Dispatches one request. `path` excludes the query string.
    ApiResponse handle(const std::string& method, const std::string& path, const std::string& body)
    {
        try {
            const auto parts = split_path(path);
            if (parts.empty() || parts[0] != "session") {
                throw ApiError(404, "no such endpoint");
            }
            if (parts.size() == 1 && method == "POST") {
                return create(parse(body), true);
            }
            if (parts.size() == 3 && method == "GET" && parts[2] == "menu") {
                return menu(parts[1]);
            }
            if (parts.size() == 3 && method == "GET" && parts[2] == "stats") {
                return stats(parts[1]);
            }
            if (parts.size() == 3 && method == "POST" && parts[2] == "click") {
                return click(parts[1], parse(body), true);
            }
            if (parts.size() == 3 && method == "POST" && parts[2] == "end-block") {
                return end_block(parts[1], body.empty() ? json::object() : parse(body), true);
            }
            throw ApiError(404, "no such endpoint");
        } catch (const ApiError& e) {
            return {e.status, json{{"error", e.what()}}};
        } catch (const UnknownLabel& e) {
            return {400, json{{"error", std::string("unknown label: ") + e.what()}}};
        } catch (const json::exception& e) {
            return {400, json{{"error", std::string("malformed request: ") + e.what()}}};
        } catch (const std::invalid_argument& e) {
            return {400, json{{"error", e.what()}}};
        } catch (const std::exception& e) {
            return {500, json{{"error", e.what()}}};
        }
    }

    /// State the next end-block would plan from: the block's clicks fold
    /// into user interest and the current menu becomes the expected one.
    InteractionState planning_state(const std::string& id)
    {
        auto s = find(id);
        std::lock_guard lock(s->mutex);
        return planning_state(*s);
    }

    PlannerConfig planning_config(const std::string& id, const json& body = json::object())
    {
        auto s = find(id);
        std::lock_guard lock(s->mutex);
        return block_config(*s, body);
    }

    std::size_t session_count() const
    {
        std::shared_lock lock(sessions_mutex_);
        return sessions_.size();
    }

private:
    static json parse(const std::string& body)
    {
        try {
            return json::parse(body);
        } catch (const json::exception& e) {
            throw ApiError(400, std::string("malformed JSON: ") + e.what());
        }
    }

    static std::vector<std::string> split_path(const std::string& path)
    {
        std::vector<std::string> out;
        std::string cur;
        for (char ch : path) {
            if (ch == '/') {
                if (!cur.empty()) {
                    out.push_back(cur);
                }
                cur.clear();
            } else {
                cur += ch;
            }
        }
        if (!cur.empty()) {
            out.push_back(cur);
        }
        return out;
    }

    std::shared_ptr<Session> find(const std::string& id) const
    {
        std::shared_lock lock(sessions_mutex_);
        auto it = sessions_.find(id);
        if (it == sessions_.end()) {
            throw ApiError(404, "no such session: " + id);
        }
        return it->second;
    }

    void append_log(const std::string& op, const std::string& id, const json& body)
    {
        if (log_path_.empty() || replaying_) {
            return;
        }
        std::lock_guard lock(log_mutex_);
        log_ << json{{"op", op}, {"id", id}, {"body", body}}.dump() << '\n';
        log_.flush();
    }

    void replay()
    {
        std::ifstream in(log_path_);
        if (!in) {
            return;
        }
        replaying_ = true;
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) {
                continue;
            }
            const json entry = json::parse(line);
            const auto op = entry.at("op").get<std::string>();
            const auto id = entry.at("id").get<std::string>();
            if (op == "create") {
                create(entry.at("body"), false, id);
            } else if (op == "click") {
                click(id, entry.at("body"), false);
            } else if (op == "end-block") {
                end_block(id, entry.at("body"), false);
            }
        }
        replaying_ = false;
    }

    static json menu_json(const Session& s)
    {
        return json{{"session_id", s.id}, {"menu", design_to_json(s.state.design)}, {"block", s.block}};
    }

    ApiResponse create(const json& body, bool log, std::string id = {})
    {
        const json& design_json = body.contains("menu") ? body.at("menu") : body;
        auto design = design_from_json(design_json);
        if (auto err = validate_design(design)) {
            throw ApiError(400, "invalid menu: " + *err);
        }
        auto session = std::make_shared<Session>();
        session->session_window = body.value("session_window", static_cast<std::size_t>(kDefaultSessionLength));
        UserState user = body.contains("history") ? user_from_json(body.at("history"), design, session->session_window)
                                                  : UserState{{}, 0, interest_from_log({}, session->session_window, design.catalog().size())};
        session->state = make_state(design, std::move(user));
        if (body.contains("config")) {
            from_json(body.at("config"), session->planner);
        }
        if (auto err = validate_config(session->planner)) {
            throw ApiError(400, "invalid config: " + *err);
        }
        if (session->planner.reward_source == RewardSource::value_network && estimator_ == nullptr) {
            throw ApiError(400, "value-network planning requested but no model is loaded");
        }
        {
            std::unique_lock lock(sessions_mutex_);
            if (id.empty()) {
                id = "s" + std::to_string(++next_id_);
            } else if (id.size() > 1 && id[0] == 's') {
                next_id_ = std::max<std::uint64_t>(next_id_, std::stoull(id.substr(1)));
            }
            session->id = id;
            sessions_[id] = session;
            if (log) {
                append_log("create", id, body);
            }
        }
        return {201, menu_json(*session)};
    }

    ApiResponse menu(const std::string& id)
    {
        auto s = find(id);
        std::lock_guard lock(s->mutex);
        return {200, menu_json(*s)};
    }

    ApiResponse click(const std::string& id, const json& body, bool log)
    {
        auto s = find(id);
        std::lock_guard lock(s->mutex);
        if (!body.contains("label") || !body.at("label").is_string()) {
            throw ApiError(400, "click needs a string label");
        }
        const auto label = body.at("label").get<std::string>();
        const auto lid = s->state.design.catalog().find(label);
        if (!lid || s->state.design.item_index(*lid) == 0) {
            throw ApiError(422, "label not in menu: " + label);
        }
        const double timestamp = body.contains("timestamp") ? body.at("timestamp").get<double>() : 0.0;
        const int location = s->state.design.item_index(*lid);
        s->state.user.log.push_back(Click{*lid, location, s->state.user.now});
        s->state.user.now += 1;
        s->clicks.push_back(SessionClick{label, timestamp, location, s->block});
        if (log) {
            append_log("click", id, body);
        }
        return {200, json{{"session_id", id},
                          {"label", label},
                          {"location", location},
                          {"block", s->block},
                          {"clicks_in_block", s->clicks.size() - s->block_start}}};
    }

    InteractionState planning_state(const Session& s) const
    {
        InteractionState st = s.state;
        if (s.clicks.size() > s.block_start) {
            st.user.interest = interest_from_log(st.user.log, s.clicks.size() - s.block_start,
                                                 st.design.catalog().size());
        }
        st.expected_design = st.design;
        return st;
    }

    static PlannerConfig block_config(const Session& s, const json& body)
    {
        PlannerConfig pc = s.planner;
        if (body.contains("objective")) {
            pc.objective = objective_from_string(body.at("objective").get<std::string>());
        }
        pc.seed = mix_seed(s.planner.seed, static_cast<std::uint64_t>(s.block));
        return pc;
    }

    ApiResponse end_block(const std::string& id, const json& body, bool log)
    {
        auto s = find(id);
        std::lock_guard lock(s->mutex);
        const auto pc = block_config(*s, body);
        const auto state = planning_state(*s);
        const auto result = plan(state, pc, params_, estimator_);

        s->state = state;
        s->state.design = result.final_design;
        s->history.push_back(BlockRecord{s->block, result.chosen, result.predicted, to_string(pc.objective)});
        s->block += 1;
        s->block_start = s->clicks.size();
        if (log) {
            append_log("end-block", id, body);
        }
        json adaptations = json::array();
        for (const auto& a : result.chosen) {
            adaptations.push_back(adaptation_to_json(a, result.final_design.catalog()));
        }
        return {200, json{{"session_id", id},
                          {"menu", design_to_json(result.final_design)},
                          {"predicted_reward", result.predicted},
                          {"adaptations", adaptations},
                          {"objective", to_string(pc.objective)},
                          {"value", result.value},
                          {"block", s->block}}};
    }

    ApiResponse stats(const std::string& id)
    {
        auto s = find(id);
        std::lock_guard lock(s->mutex);
        std::map<int, std::pair<std::size_t, double>> per_block;
        for (const auto& c : s->clicks) {
            auto& b = per_block[c.block];
            b.first += 1;
            b.second += c.timestamp;
        }
        json blocks = json::array();
        for (const auto& [b, v] : per_block) {
            blocks.push_back({{"block", b}, {"clicks", v.first}, {"mean_timestamp", v.second / static_cast<double>(v.first)}});
        }
        json history = json::array();
        for (const auto& h : s->history) {
            json adaptations = json::array();
            for (const auto& a : h.adaptations) {
                adaptations.push_back(adaptation_to_json(a, s->state.design.catalog()));
            }
            history.push_back({{"block", h.block},
                               {"objective", h.objective},
                               {"predicted_reward", h.predicted},
                               {"adaptations", adaptations}});
        }
        json clicks = json::array();
        for (const auto& c : s->clicks) {
            clicks.push_back({{"label", c.label}, {"timestamp", c.timestamp}, {"location", c.location}, {"block", c.block}});
        }
        return {200, json{{"session_id", id},
                          {"block", s->block},
                          {"clicks_total", s->clicks.size()},
                          {"clicks_in_block", s->clicks.size() - s->block_start},
                          {"blocks", blocks},
                          {"clicks", clicks},
                          {"adaptations", history},
                          {"predicted_selection_time", expected_selection_time(s->state, params_)}}};
    }

    std::string log_path_;
    ModelParams params_;
    const ValueEstimator* estimator_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
    mutable std::shared_mutex sessions_mutex_;
    std::mutex log_mutex_;
    std::ofstream log_;
    std::uint64_t next_id_ = 0;
    bool replaying_ = false;
};

/// Routes the session API onto an httplib server. Responses carry
/// permissive CORS headers for a browser client on another origin.
inline void mount(httplib::Server& server, SessionService& service)
{
    auto forward = [&service](const httplib::Request& req, httplib::Response& res) {
        const auto out = service.handle(req.method, req.path, req.body);
        res.status = out.status;
        res.set_content(out.body.dump(), "application/json");
    };
    server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                {"Access-Control-Allow-Headers", "Content-Type"},
                                {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
    server.Post("/session", forward);
    server.Get(R"(/session/[^/]+/(menu|stats))", forward);
    server.Post(R"(/session/[^/]+/(click|end-block))", forward);
    server.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
        if (res.body.empty()) {
            res.set_content(json{{"error", "not found"}}.dump(), "application/json");
        }
    });
}

/// Blocks until the server stops. Returns false when binding fails.
inline bool serve(const std::string& host, int port, SessionService& service)
{
    httplib::Server server;
    mount(server, service);
    return server.listen(host, port);
}

}  // namespace adaptmenu
