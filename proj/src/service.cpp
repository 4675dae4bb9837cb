#include "staog/service.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "httplib.h"
#include "json_util.hpp"
#include "staog/error.hpp"

namespace staog {

using detail::json;

namespace {

HttpResponse error(int status, const std::string& code, const std::string& message) {
    return {status, {{"code", code}, {"message", message}}};
}

std::vector<std::string> split_path(const std::string& path) {
    std::vector<std::string> parts;
    std::string part;
    std::istringstream in(path);
    while (std::getline(in, part, '/'))
        if (!part.empty()) parts.push_back(part);
    return parts;
}

std::optional<int> parse_int(const std::string& s) {
    int v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    std::uint64_t h = a ^ (b + 0x9E3779B97F4A7C15ULL + (a << 6) + (a >> 2));
    h ^= h >> 33;
    h *= 0xff51afd7ed558ccdULL;
    h ^= h >> 33;
    return h;
}

std::string fnv1a_hex(const std::string& text) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    std::ostringstream out;
    out << std::hex << std::setw(16) << std::setfill('0') << h;
    return out.str();
}

std::string_view to_string(SceneStatus s) {
    switch (s) {
        case SceneStatus::pending: return "pending";
        case SceneStatus::labeled: return "labeled";
        case SceneStatus::skipped: return "skipped";
    }
    return "pending";
}

json params_json(const PotentialParams& theta) {
    json j = json::object();
    for (std::size_t i = 0; i < kTermCount; ++i)
        j[std::string(term_name(static_cast<Term>(i)))] = theta.values[static_cast<Eigen::Index>(i)];
    return j;
}

}  // namespace

Service::Service(const StAog& g, const Lexicon& lex, PotentialParams theta, ServiceConfig cfg,
                 const MotionLibrary* motions, const FaceModel* faces)
    : g_(g), lex_(lex), cfg_(std::move(cfg)), motions_(motions), faces_(faces), theta_(std::move(theta)) {
    theta_.validate();
    cfg_.train.validate();
    history_.push_back(RoundRecord{1, 0, 0, 0, 0, params_version(theta_), "", {}});
    if (cfg_.event_log.empty()) return;
    std::ifstream in(cfg_.event_log, std::ios::binary);
    std::string line;
    std::size_t line_no = 0;
    while (in && std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json event;
        try {
            event = json::parse(line);
        } catch (const json::parse_error& e) {
            // A torn final line from a crash mid-append is dropped; anything else is corruption.
            if (in.peek() == std::char_traits<char>::eof()) break;
            throw ParseError(cfg_.event_log.string() + ": " + e.what(), line_no);
        }
        apply(event, true);
    }
}

void Service::record(const json& event) {
    if (!cfg_.event_log.empty()) {
        std::ofstream out(cfg_.event_log, std::ios::binary | std::ios::app);
        out << event.dump() << '\n';
        out.flush();
        if (!out) throw Error("cannot append to event log " + cfg_.event_log.string());
    }
    apply(event, false);
}

void Service::apply(const json& event, bool /*replaying*/) {
    const auto type = detail::require<std::string>(event, "type");
    if (type == "samples") {
        const int round = detail::require<int>(event, "round");
        ++sample_requests_;
        for (const auto& sj : detail::require<json>(event, "scenes")) {
            SessionScene s;
            s.id = detail::require<std::string>(sj, "id");
            s.round = round;
            s.pg = parse_graph_from_json(detail::require<json>(sj, "scene"), g_);
            order_.push_back(s.id);
            scenes_[s.id] = std::move(s);
            ++next_id_;
        }
    } else if (type == "label" || type == "skip") {
        auto& s = scenes_.at(detail::require<std::string>(event, "id"));
        auto& rec = history_.back();
        if (type == "label") {
            s.status = SceneStatus::labeled;
            s.label = label_from_string(detail::require<std::string>(event, "label"));
            store_.append(LabeledScene{s.id, s.pg, *s.label, s.round, LabelSource::human});
            if (s.round == rec.round) {
                if (*s.label == Label::good) ++rec.good;
                else if (*s.label == Label::medium) ++rec.medium;
                else ++rec.bad;
            }
        } else {
            s.status = SceneStatus::skipped;
            if (s.round == rec.round) ++rec.skipped;
        }
    } else if (type == "train") {
        theta_ = parse_params(detail::require<std::string>(event, "theta"));
        auto& rec = history_.back();
        rec.dataset_hash = detail::require<std::string>(event, "dataset_hash");
        rec.loss_trace = detail::require<std::vector<double>>(event, "loss_trace");
        round_ = detail::require<int>(event, "round") + 1;
        history_.push_back(RoundRecord{round_, 0, 0, 0, 0, params_version(theta_), "", {}});
    } else {
        throw ValidationError("unknown event type '" + type + "'");
    }
}

std::size_t Service::pending_count_locked() const {
    return static_cast<std::size_t>(std::count_if(scenes_.begin(), scenes_.end(), [](const auto& kv) {
        return kv.second.status == SceneStatus::pending;
    }));
}

int Service::round() const {
    std::lock_guard lock(mu_);
    return round_;
}

PotentialParams Service::theta() const {
    std::lock_guard lock(mu_);
    return theta_;
}

std::vector<SessionScene> Service::scenes() const {
    std::lock_guard lock(mu_);
    std::vector<SessionScene> out;
    for (const auto& id : order_) out.push_back(scenes_.at(id));
    return out;
}

std::vector<RoundRecord> Service::history() const {
    std::lock_guard lock(mu_);
    return history_;
}

HttpResponse Service::handle(const std::string& method, const std::string& target, const std::string& body) {
    try {
        std::string path = target, query;
        if (const auto q = target.find('?'); q != std::string::npos) {
            path = target.substr(0, q);
            query = target.substr(q + 1);
        }
        const auto parts = split_path(path);
        json j = json::object();
        if (method == "POST" && !body.empty()) {
            try {
                j = json::parse(body);
            } catch (const json::parse_error& e) {
                return error(400, "bad_json", e.what());
            }
        }

        if (method == "GET" && parts == std::vector<std::string>{"params"}) return get_params();
        if (method == "GET" && parts == std::vector<std::string>{"rounds", "current"}) return get_round();
        if (method == "GET" && parts.size() == 1 && parts[0] == "scenes") {
            std::string status;
            std::istringstream qs(query);
            std::string kv;
            while (std::getline(qs, kv, '&'))
                if (kv.rfind("status=", 0) == 0) status = kv.substr(7);
            return list_scenes(status);
        }
        if (method == "GET" && parts.size() == 2 && parts[0] == "scenes") return get_scene(parts[1]);
        if (method == "POST" && parts.size() == 3 && parts[0] == "scenes" && parts[2] == "label")
            return post_label(parts[1], j);
        if (method == "POST" && parts.size() == 3 && parts[0] == "scenes" && parts[2] == "skip") return post_skip(parts[1]);
        if (method == "POST" && parts.size() == 3 && parts[0] == "rounds") {
            const auto n = parse_int(parts[1]);
            if (!n) return error(404, "not_found", "round must be an integer");
            if (parts[2] == "samples") return post_samples(*n, j);
            if (parts[2] == "train") return post_train(*n);
        }
        return error(404, "not_found", "no route for " + method + " " + path);
    } catch (const ValidationError& e) {
        return error(422, "invalid", e.what());
    } catch (const std::exception& e) {
        return error(500, "internal", e.what());
    }
}

HttpResponse Service::post_samples(int round, const json& body) {
    if (!body.is_object() || !body.contains("count") || !body.at("count").is_number_integer())
        return error(422, "bad_count", "body must carry an integer 'count'");
    const auto count = body.at("count").get<long long>();
    if (count < 1 || static_cast<std::size_t>(count) > cfg_.max_samples)
        return error(422, "bad_count", "count must be between 1 and " + std::to_string(cfg_.max_samples));

    std::lock_guard lock(mu_);
    if (training_) return error(409, "training", "a training round is running; retry later");
    if (round != round_) return error(409, "wrong_round", "current round is " + std::to_string(round_));

    std::uint64_t seed = cfg_.seed;
    if (body.contains("seed")) seed = body.at("seed").get<std::uint64_t>();
    else if (cfg_.seed_policy == SeedPolicy::fixed) seed = mix(mix(seed, static_cast<std::uint64_t>(round)), static_cast<std::uint64_t>(count));
    else seed = mix(mix(seed, static_cast<std::uint64_t>(round)), sample_requests_ + 1);
    Rng rng(seed);
    const auto pgs = sample_scenes(g_, theta_, lex_, static_cast<std::size_t>(count), cfg_.train.refine_steps, rng);

    json scenes = json::array(), ids = json::array();
    std::uint64_t next = next_id_;
    for (const auto& pg : pgs) {
        std::ostringstream id;
        id << 'r' << round << '-' << std::setw(6) << std::setfill('0') << next++;
        ids.push_back(id.str());
        scenes.push_back({{"id", id.str()}, {"scene", parse_graph_to_json(pg, g_)}});
    }
    record({{"type", "samples"}, {"round", round}, {"seed", seed}, {"scenes", scenes}});
    return {200, {{"round", round}, {"ids", ids}, {"pending", pending_count_locked()}}};
}

HttpResponse Service::get_scene(const std::string& id) {
    std::unique_lock lock(mu_);
    const auto it = scenes_.find(id);
    if (it == scenes_.end()) return error(404, "not_found", "unknown scene " + id);
    const SessionScene s = it->second;
    const PotentialParams theta = theta_;
    const auto cached = frame_cache_.find(id);
    std::optional<json> frames;
    if (cached != frame_cache_.end()) frames = cached->second;
    lock.unlock();

    SceneDocument doc{g_.name, s.pg, s.label, energy_breakdown(s.pg, g_, theta, lex_)};
    json out = {{"id", s.id}, {"round", s.round}, {"status", to_string(s.status)}, {"document", scene_to_json(doc, g_)}};
    if (!frames && motions_ != nullptr && faces_ != nullptr) {
        const auto rendered = export_animation(s.pg, *motions_, *faces_, cfg_.fps);
        frames = render_frames_to_json(rendered);
        lock.lock();
        frame_cache_.emplace(id, *frames);
    }
    if (frames) {
        out["fps"] = cfg_.fps;
        out["frames"] = std::move(*frames);
    }
    return {200, out};
}

HttpResponse Service::list_scenes(const std::string& status) {
    if (!status.empty() && status != "pending" && status != "labeled" && status != "skipped")
        return error(422, "bad_status", "status must be pending, labeled or skipped");
    std::lock_guard lock(mu_);
    json ids = json::array();
    for (const auto& id : order_) {
        const auto& s = scenes_.at(id);
        if (status.empty() || to_string(s.status) == status) ids.push_back(id);
    }
    return {200, {{"ids", ids}, {"count", ids.size()}}};
}

HttpResponse Service::post_label(const std::string& id, const json& body) {
    if (!body.is_object() || !body.contains("label") || !body.at("label").is_string())
        return error(422, "bad_label", "body must carry a 'label' of good, medium or bad");
    const auto text = body.at("label").get<std::string>();
    if (text != "good" && text != "medium" && text != "bad")
        return error(422, "bad_label", "label must be good, medium or bad, got '" + text + "'");
    std::lock_guard lock(mu_);
    if (training_) return error(409, "training", "a training round is running; retry later");
    const auto it = scenes_.find(id);
    if (it == scenes_.end()) return error(404, "not_found", "unknown scene " + id);
    if (it->second.status != SceneStatus::pending)
        return error(409, "already_labeled", "scene " + id + " is already " + std::string(to_string(it->second.status)));
    record({{"type", "label"}, {"id", id}, {"label", text}});
    return {200, {{"id", id}, {"label", text}, {"pending", pending_count_locked()}}};
}

HttpResponse Service::post_skip(const std::string& id) {
    std::lock_guard lock(mu_);
    if (training_) return error(409, "training", "a training round is running; retry later");
    const auto it = scenes_.find(id);
    if (it == scenes_.end()) return error(404, "not_found", "unknown scene " + id);
    if (it->second.status != SceneStatus::pending)
        return error(409, "already_labeled", "scene " + id + " is already " + std::string(to_string(it->second.status)));
    record({{"type", "skip"}, {"id", id}});
    return {200, {{"id", id}, {"status", "skipped"}, {"pending", pending_count_locked()}}};
}

HttpResponse Service::post_train(int round) {
    std::unique_lock lock(mu_);
    if (training_) return error(409, "training", "a training round is already running");
    if (round != round_) return error(409, "wrong_round", "current round is " + std::to_string(round_));
    if (const auto pending = pending_count_locked(); pending > 0)
        return error(409, "pending_scenes", std::to_string(pending) + " scenes still need a label or skip");
    const auto dataset = store_.snapshot();
    const bool any_expert =
        std::any_of(dataset.begin(), dataset.end(), [&](const auto& s) { return cfg_.train.is_expert(s.label); });
    if (!any_expert)
        return error(409, "no_expert_scenes",
                     "no scene has been labeled good yet; label at least one scene good before training");
    const PotentialParams before = theta_;
    training_ = true;
    lock.unlock();

    TrainResult result;
    std::string hash;
    try {
        std::string records;
        for (const auto& s : dataset) records += labeled_scene_to_json(s, g_).dump() + "\n";
        hash = fnv1a_hex(records);
        Rng rng(mix(mix(cfg_.seed, static_cast<std::uint64_t>(round)), 0x7472616e));
        result = train_round(g_, before, dataset, cfg_.train, lex_, rng);
    } catch (...) {
        lock.lock();
        training_ = false;
        throw;
    }

    lock.lock();
    training_ = false;
    record({{"type", "train"},
            {"round", round},
            {"theta", format_params(result.theta)},
            {"loss_trace", result.loss_trace},
            {"dataset_hash", hash}});
    json diff = json::object();
    for (std::size_t i = 0; i < kTermCount; ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        diff[std::string(term_name(static_cast<Term>(i)))] = result.theta.values[k] - before.values[k];
    }
    return {200,
            {{"round", round_},
             {"loss_trace", result.loss_trace},
             {"theta_version", params_version(theta_)},
             {"previous_version", params_version(before)},
             {"params", params_json(theta_)},
             {"diff", diff},
             {"experts_used", result.experts_used},
             {"truncated", result.truncated},
             {"dataset_hash", hash}}};
}

HttpResponse Service::get_params() {
    std::lock_guard lock(mu_);
    return {200, {{"version", params_version(theta_)}, {"params", params_json(theta_)}, {"text", format_params(theta_)}}};
}

HttpResponse Service::get_round() {
    std::lock_guard lock(mu_);
    json rounds = json::array();
    for (const auto& r : history_) {
        const double labeled = static_cast<double>(r.good + r.medium + r.bad);
        json rj = {{"round", r.round},
                   {"good", r.good},
                   {"medium", r.medium},
                   {"bad", r.bad},
                   {"skipped", r.skipped},
                   {"theta_version", r.theta_version}};
        if (labeled > 0) {
            rj["good_rate"] = static_cast<double>(r.good) / labeled;
            rj["bad_rate"] = static_cast<double>(r.bad) / labeled;
        }
        if (!r.dataset_hash.empty()) rj["dataset_hash"] = r.dataset_hash;
        if (!r.loss_trace.empty()) rj["loss_trace"] = r.loss_trace;
        rounds.push_back(std::move(rj));
    }
    std::size_t labeled = 0, skipped = 0;
    for (const auto& [_, s] : scenes_) {
        labeled += s.status == SceneStatus::labeled;
        skipped += s.status == SceneStatus::skipped;
    }
    return {200,
            {{"round", round_},
             {"training", training_},
             {"pending", pending_count_locked()},
             {"labeled", labeled},
             {"skipped", skipped},
             {"theta_version", params_version(theta_)},
             {"rounds", rounds}}};
}

void Service::serve(const std::string& host, int port) {
    httplib::Server svr;
    auto forward = [this](const httplib::Request& req, httplib::Response& res) {
        std::string target = req.path;
        if (!req.params.empty()) {
            target += '?';
            bool first = true;
            for (const auto& [k, v] : req.params) {
                if (!first) target += '&';
                target += k + "=" + v;
                first = false;
            }
        }
        const auto r = handle(req.method, target, req.body);
        res.status = r.status;
        res.set_content(r.body.dump(), "application/json");
    };
    svr.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                             {"Access-Control-Allow-Headers", "Content-Type"},
                             {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
    svr.Get(".*", forward);
    svr.Post(".*", forward);
    svr.Options(".*", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    {
        std::lock_guard lock(mu_);
        server_ = &svr;
    }
    const bool ok = svr.listen(host, port);
    {
        std::lock_guard lock(mu_);
        server_ = nullptr;
    }
    if (!ok) throw Error("cannot listen on " + host + ":" + std::to_string(port));
}

void Service::stop() {
    std::lock_guard lock(mu_);
    if (server_ != nullptr) static_cast<httplib::Server*>(server_)->stop();
}

}  // namespace staog
