#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "simgan/core/error.hpp"
#include "simgan/core/log.hpp"
#include "simgan/core/png_io.hpp"
#include "simgan/gan/trace.hpp"
#include "simgan/simsvc/index.hpp"
#include "simgan/snn/extractor.hpp"

#ifndef SIMGAN_VERSION
#define SIMGAN_VERSION "0.1.0"
#endif

namespace simgan::simsvc {

struct ServiceConfig {
    std::string host = "127.0.0.1";
    int port = 8080; ///< 0 picks a free port
    fs::path index_dir = "indexes";
    fs::path runs_dir = "runs";
    double duplicate_threshold = 0.99;

    [[nodiscard]] nlohmann::json to_json() const
    {
        return {{"host", host},
                {"port", port},
                {"index_dir", index_dir.string()},
                {"runs_dir", runs_dir.string()},
                {"duplicate_threshold", duplicate_threshold}};
    }

    static ServiceConfig from_json(const nlohmann::json& j)
    {
        ServiceConfig c;
        c.host = j.value("host", c.host);
        c.port = j.value("port", c.port);
        c.index_dir = j.value("index_dir", c.index_dir.string());
        c.runs_dir = j.value("runs_dir", c.runs_dir.string());
        c.duplicate_threshold = j.value("duplicate_threshold", c.duplicate_threshold);
        return c;
    }
};

/// Run directories live under runs_dir/<id>/ and hold rewards.csv and
/// optionally tsne.csv.
inline constexpr const char* kRewardsFile = "rewards.csv";
inline constexpr const char* kTsneFile = "tsne.csv";

class Service {
public:
    Service(ServiceConfig cfg, snn::LayeredExtractor extractor)
        : cfg_(std::move(cfg)), extractor_(std::move(extractor)), digest_(extractor_.digest())
    {
        routes();
    }

    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    ~Service() { stop(); }

    /// Binds the listening socket; throws DependencyError if the port is taken.
    int bind()
    {
        if (cfg_.port == 0) {
            port_ = server_.bind_to_any_port(cfg_.host);
        } else {
            port_ = server_.bind_to_port(cfg_.host, cfg_.port) ? cfg_.port : -1;
        }
        if (port_ < 0) {
            throw DependencyError("cannot bind " + cfg_.host + ":" + std::to_string(cfg_.port)
                                  + " (port in use or not permitted)");
        }
        return port_;
    }

    /// Blocking accept loop (after bind()).
    void listen() { server_.listen_after_bind(); }

    /// Binds and serves on a background thread; returns the port.
    int start()
    {
        const int p = bind();
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
        return p;
    }

    void stop()
    {
        server_.stop();
        if (thread_.joinable()) {
            thread_.join();
        }
    }

    [[nodiscard]] int port() const { return port_; }
    [[nodiscard]] const std::string& extractor_digest() const { return digest_; }

    /// Loaded index, from cache or disk.
    std::shared_ptr<const SimilarityIndex> index(const std::string& id)
    {
        {
            std::shared_lock lock(cache_mutex_);
            auto it = cache_.find(id);
            if (it != cache_.end()) {
                return it->second;
            }
        }
        auto idx = std::make_shared<const SimilarityIndex>(load_index(cfg_.index_dir, id));
        std::unique_lock lock(cache_mutex_);
        return cache_.emplace(id, idx).first->second;
    }

    /// Builds and persists an index; builds of one id are serialised.
    std::shared_ptr<const SimilarityIndex> build(const fs::path& image_dir, const std::string& id,
                                                 std::vector<std::string>* warnings = nullptr)
    {
        std::mutex* m = nullptr;
        {
            std::lock_guard lock(build_mutexes_guard_);
            m = &build_mutexes_[id];
        }
        std::lock_guard build_lock(*m);
        auto idx = std::make_shared<const SimilarityIndex>(build_index(image_dir, extractor_, id, warnings));
        save_index(cfg_.index_dir, *idx);
        std::unique_lock lock(cache_mutex_);
        cache_[id] = idx;
        return idx;
    }

    httplib::Server& http() { return server_; }

private:
    static void send_json(httplib::Response& res, const nlohmann::json& j, int status = 200)
    {
        res.status = status;
        res.set_content(j.dump(), "application/json");
    }

    static void send_error(httplib::Response& res, int status, const std::string& msg)
    {
        send_json(res, {{"error", msg}}, status);
    }

    template <class F>
    static void guarded(httplib::Response& res, F&& f)
    {
        try {
            f();
        } catch (const DependencyError& e) {
            send_error(res, 404, e.what());
        } catch (const NumericDomainError& e) {
            send_error(res, 422, e.what());
        } catch (const InvalidInput& e) {
            send_error(res, 400, e.what());
        } catch (const ConfigError& e) {
            send_error(res, 400, e.what());
        } catch (const nlohmann::json::exception& e) {
            send_error(res, 400, std::string("bad JSON: ") + e.what());
        } catch (const std::exception& e) {
            send_error(res, 500, e.what());
        }
    }

    static nlohmann::json index_summary(const SimilarityIndex& idx)
    {
        return {{"index_id", idx.index_id},
                {"entries", idx.size()},
                {"dim", idx.dim()},
                {"extractor_digest", idx.extractor_digest},
                {"created_at", idx.created_at}};
    }

    void routes()
    {
        server_.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
        // SO_REUSEADDR only: without SO_REUSEPORT a second server cannot share the port.
        server_.set_socket_options([](socket_t sock) {
            int yes = 1;
            ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
        });

        server_.Get("/health", [this](const httplib::Request&, httplib::Response& res) {
            send_json(res, {{"status", "ok"}, {"version", SIMGAN_VERSION}, {"extractor_digest", digest_}});
        });

        server_.Get("/indexes", [this](const httplib::Request&, httplib::Response& res) {
            guarded(res, [&] {
                nlohmann::json arr = nlohmann::json::array();
                for (const auto& id : list_indexes(cfg_.index_dir)) {
                    try {
                        arr.push_back(index_summary(*index(id)));
                    } catch (const std::exception& e) {
                        log::warn("index '" + id + "' unreadable: " + e.what());
                    }
                }
                send_json(res, arr);
            });
        });

        server_.Post("/indexes", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const auto body = nlohmann::json::parse(req.body);
                const std::string dir = body.at("image_dir").get<std::string>();
                const std::string id = body.at("index_id").get<std::string>();
                std::vector<std::string> warnings;
                const auto idx = build(dir, id, &warnings);
                nlohmann::json j = index_summary(*idx);
                j["warnings"] = warnings;
                send_json(res, j, 201);
            });
        });

        server_.Post("/query", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                if (!req.is_multipart_form_data() || !req.has_file("image")) {
                    throw InvalidInput("multipart field 'image' is required");
                }
                if (!req.has_file("index_id")) {
                    throw InvalidInput("multipart field 'index_id' is required");
                }
                const std::string id = req.get_file_value("index_id").content;
                int k = 5;
                if (req.has_file("k")) {
                    try {
                        k = std::stoi(req.get_file_value("k").content);
                    } catch (const std::exception&) {
                        throw InvalidInput("k must be an integer");
                    }
                }
                const Image img = decode_png(req.get_file_value("image").content);
                const auto idx = index(id);
                if (idx->extractor_digest != digest_) {
                    throw InvalidInput("index '" + id + "' was built with a different extractor");
                }
                extractor_.check_input(img.height(), img.width());
                const QueryResult r = [&] {
                    QueryResult q;
                    q.results = rank(*idx, extractor_.embed(img), k);
                    Sha256 h;
                    const int dims[2] = {img.height(), img.width()};
                    h.update(dims, sizeof(dims));
                    h.update(img.pixels());
                    q.query_digest = h.hex();
                    return q;
                }();
                nlohmann::json results = nlohmann::json::array();
                for (const auto& m : r.results) {
                    results.push_back({{"image_id", m.image_id},
                                       {"score", m.score},
                                       {"url", "/images/" + id + "/" + m.image_id},
                                       {"candidate_duplicate", m.score > cfg_.duplicate_threshold}});
                }
                send_json(res, {{"results", results}, {"query_digest", r.query_digest}, {"index_id", id}});
            });
        });

        server_.Get(R"(/images/([^/]+)/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const auto idx = index(req.matches[1].str());
                const IndexEntry* e = idx->find(req.matches[2].str());
                if (!e) {
                    throw DependencyError("no image '" + req.matches[2].str() + "' in index");
                }
                std::ifstream in(e->path, std::ios::binary);
                if (!in) {
                    throw DependencyError("image file missing: " + e->path);
                }
                std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
                res.set_content(std::move(bytes), "image/png");
            });
        });

        server_.Get("/runs", [this](const httplib::Request&, httplib::Response& res) {
            guarded(res, [&] {
                nlohmann::json arr = nlohmann::json::array();
                std::vector<std::string> ids;
                if (fs::is_directory(cfg_.runs_dir)) {
                    for (const auto& e : fs::directory_iterator(cfg_.runs_dir)) {
                        if (e.is_directory() && fs::exists(e.path() / kRewardsFile)) {
                            ids.push_back(e.path().filename().string());
                        }
                    }
                }
                std::sort(ids.begin(), ids.end());
                for (const auto& id : ids) {
                    arr.push_back({{"id", id}, {"has_tsne", fs::exists(cfg_.runs_dir / id / kTsneFile)}});
                }
                send_json(res, arr);
            });
        });

        server_.Get(R"(/runs/([^/]+)/rewards)", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const fs::path p = run_file(req.matches[1].str(), kRewardsFile);
                send_json(res, gan::RewardTrace::read_csv_snapshot(p).to_json());
            });
        });

        server_.Get(R"(/runs/([^/]+)/tsne)", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const fs::path p = run_file(req.matches[1].str(), kTsneFile);
                std::ifstream in(p, std::ios::binary);
                std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
                res.set_content(std::move(text), "text/csv");
            });
        });
    }

    [[nodiscard]] fs::path run_file(const std::string& id, const char* name) const
    {
        if (!valid_index_id(id)) {
            throw InvalidInput("invalid run id '" + id + "'");
        }
        const fs::path p = cfg_.runs_dir / id / name;
        if (!fs::exists(p)) {
            throw DependencyError("run '" + id + "' has no " + name);
        }
        return p;
    }

    ServiceConfig cfg_;
    snn::LayeredExtractor extractor_;
    std::string digest_;
    httplib::Server server_;
    std::thread thread_;
    int port_ = -1;

    std::shared_mutex cache_mutex_;
    std::map<std::string, std::shared_ptr<const SimilarityIndex>> cache_;
    std::mutex build_mutexes_guard_;
    std::map<std::string, std::mutex> build_mutexes_;
};

} // namespace simgan::simsvc
