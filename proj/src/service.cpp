// Copyright Contributors to the splatedit project
// SPDX-License-Identifier: Apache-2.0

#include <splatedit/error.hpp>
#include <splatedit/image_io.hpp>
#include <splatedit/raster.hpp>
#include <splatedit/service.hpp>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <atomic>
#include <charconv>
#include <cmath>
#include <mutex>
#include <variant>

namespace splatedit {

namespace {

using nlohmann::json;

struct HttpError {
    int status;
    std::string kind;
    std::string message;
};

void
sendError(httplib::Response &res, int status, const std::string &kind, const std::string &message) {
    res.status = status;
    res.set_content(json{{"error", kind}, {"message", message}}.dump(), "application/json");
}

int
statusFor(const Error &e) {
    if (dynamic_cast<const UnknownObject *>(&e)) {
        return 404;
    }
    if (dynamic_cast<const InvalidArgument *>(&e) || dynamic_cast<const LoadError *>(&e)) {
        return 400;
    }
    return 500;
}

// Runs a handler body and turns exceptions into JSON error responses.
template <typename F>
void
guarded(httplib::Response &res, F &&body) {
    try {
        body();
    } catch (const HttpError &e) {
        sendError(res, e.status, e.kind, e.message);
    } catch (const Error &e) {
        sendError(res, statusFor(e), e.kind(), e.what());
    } catch (const json::exception &e) {
        sendError(res, 400, "invalid_argument", e.what());
    } catch (const std::exception &e) {
        sendError(res, 500, "internal", e.what());
    }
}

int
intParam(const httplib::Request &req, const std::string &name) {
    if (!req.has_param(name)) {
        throw HttpError{400, "invalid_argument", "missing query parameter '" + name + "'"};
    }
    const std::string v = req.get_param_value(name);
    int out             = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) {
        throw HttpError{400, "invalid_argument", "query parameter '" + name + "' is not an integer: " + v};
    }
    return out;
}

struct RemovalEntry {
    std::shared_ptr<const GaussianScene> before;
    RemovalRecord record;
};
struct InpaintEntry {
    std::shared_ptr<const GaussianScene> before;
};
using UndoEntry = std::variant<RemovalEntry, InpaintEntry>;

} // namespace

struct Service::Impl {
    ServiceConfig config;
    std::vector<Camera> cameras;
    httplib::Server server;
    int port = -1;

    mutable std::mutex stateMutex; // guards scene pointer and undo stack
    std::shared_ptr<const GaussianScene> current;
    std::vector<UndoEntry> undo;
    std::atomic<bool> busy{false};

    // Held for the lifetime of a mutation; shared with streaming callbacks.
    struct Lease {
        explicit Lease(std::atomic<bool> &f) : flag(f) {}
        Lease(const Lease &)            = delete;
        Lease &operator=(const Lease &) = delete;
        ~Lease() {
            release();
        }
        void
        release() {
            if (!released.exchange(true)) {
                flag = false;
            }
        }
        std::atomic<bool> &flag;
        std::atomic<bool> released{false};
    };
    std::shared_ptr<Lease>
    acquire() {
        bool expected = false;
        if (!busy.compare_exchange_strong(expected, true)) {
            throw HttpError{409, "conflict", "another mutation is in progress"};
        }
        return std::make_shared<Lease>(busy);
    }

    std::shared_ptr<const GaussianScene>
    snapshot() const {
        std::lock_guard lock(stateMutex);
        return current;
    }

    Camera
    viewParam(const httplib::Request &req) const {
        if (!req.has_param("view")) {
            throw HttpError{400, "invalid_argument", "missing query parameter 'view'"};
        }
        const std::string v = req.get_param_value("view");
        if (!v.empty() && v.front() == '{') {
            return cameraFromJson(json::parse(v));
        }
        const int index = intParam(req, "view");
        if (index < 0 || static_cast<std::size_t>(index) >= cameras.size()) {
            throw HttpError{404, "unknown_view", "no view " + v + " (" + std::to_string(cameras.size()) + " loaded)"};
        }
        return cameras[index];
    }

    void
    routes() {
        server.Get("/scene/meta", [this](const httplib::Request &, httplib::Response &res) {
            guarded(res, [&] {
                json objects = json::array();
                std::size_t undoDepth;
                std::shared_ptr<const GaussianScene> scene;
                {
                    std::lock_guard lock(stateMutex);
                    scene     = current;
                    undoDepth = undo.size();
                }
                for (const auto &[id, count]: scene->objectCounts()) {
                    objects.push_back({{"id", id}, {"count", count}});
                }
                json j{{"splat_count", scene->size()}, {"objects", objects}, {"views", cameras.size()},
                       {"undo_depth", undoDepth}};
                j["image"] = cameras.empty() ? json(nullptr)
                                             : json{{"width", cameras[0].width}, {"height", cameras[0].height}};
                res.set_content(j.dump(), "application/json");
            });
        });

        server.Get("/render", [this](const httplib::Request &req, httplib::Response &res) {
            guarded(res, [&] {
                const Camera cam          = viewParam(req);
                const std::string channel = req.has_param("channel") ? req.get_param_value("channel") : "color";
                const auto scene          = snapshot();
                PngData png;
                if (channel == "color") {
                    png = colorToPng(render(*scene, cam, {.channels = kColor, .threads = config.threads}).color);
                } else if (channel == "depth") {
                    png = depthToPng(render(*scene, cam, {.channels = kDepth | kAlpha, .threads = config.threads})
                                         .normalizedDepth());
                } else if (channel == "id") {
                    png = labelsToPng(render(*scene, cam, {.channels = kIds, .threads = config.threads}).ids, true);
                } else {
                    throw HttpError{400, "invalid_argument", "channel must be color, depth or id, got '" + channel + "'"};
                }
                res.set_content(encodePng(png), "image/png");
            });
        });

        server.Get("/pick", [this](const httplib::Request &req, httplib::Response &res) {
            guarded(res, [&] {
                const Camera cam = viewParam(req);
                const int x = intParam(req, "x"), y = intParam(req, "y");
                const auto id = pickObject(*snapshot(), cam, x, y);
                res.set_content(json{{"object_id", id ? json(*id) : json(nullptr)}}.dump(), "application/json");
            });
        });

        server.Post("/remove", [this](const httplib::Request &req, httplib::Response &res) {
            guarded(res, [&] {
                const json body = json::parse(req.body);
                if (!body.is_object() || !body.contains("ids") || !body["ids"].is_array() || body["ids"].empty()) {
                    throw HttpError{400, "invalid_argument", "body must be an object with a non-empty 'ids' array"};
                }
                std::vector<ObjectId> ids;
                for (const auto &v: body["ids"]) {
                    if (!v.is_number_integer() || v.get<long long>() < 0 || v.get<long long>() > kMaxObjectId) {
                        throw HttpError{400, "invalid_argument", "object ids must be integers in [0, " +
                                                                     std::to_string(kMaxObjectId) + "]"};
                    }
                    ids.push_back(v.get<ObjectId>());
                }
                const bool hull = body.value("hull", config.hull);
                const auto lease = acquire();
                const auto before = snapshot();
                auto removal      = removeObjects(*before, ids, hull);
                json summary{{"ids", ids},
                             {"removed", removal.record.indices.size()},
                             {"hull_captured", removal.record.hullCaptured},
                             {"splat_count", removal.scene.size()}};
                {
                    std::lock_guard lock(stateMutex);
                    current = std::make_shared<const GaussianScene>(std::move(removal.scene));
                    undo.emplace_back(RemovalEntry{before, std::move(removal.record)});
                    summary["undo_depth"] = undo.size();
                }
                res.set_content(summary.dump(), "application/json");
            });
        });

        server.Post("/undo", [this](const httplib::Request &, httplib::Response &res) {
            guarded(res, [&] {
                const auto lease = acquire();
                std::optional<UndoEntry> top;
                {
                    std::lock_guard lock(stateMutex);
                    if (undo.empty()) {
                        throw HttpError{400, "invalid_argument", "nothing to undo"};
                    }
                    top = undo.back();
                }
                std::shared_ptr<const GaussianScene> restored;
                std::string undone;
                if (const auto *r = std::get_if<RemovalEntry>(&*top)) {
                    restored = std::make_shared<const GaussianScene>(restoreRemoval(*snapshot(), r->record));
                    undone   = "remove";
                } else {
                    restored = std::get<InpaintEntry>(*top).before;
                    undone   = "inpaint";
                }
                std::lock_guard lock(stateMutex);
                current = restored;
                undo.pop_back();
                res.set_content(
                    json{{"undone", undone}, {"splat_count", current->size()}, {"undo_depth", undo.size()}}.dump(),
                    "application/json");
            });
        });

        server.Post("/inpaint", [this](const httplib::Request &req, httplib::Response &res) {
            guarded(res, [&] { startInpaint(req, res); });
        });
    }

    void
    startInpaint(const httplib::Request &req, httplib::Response &res) {
        const json body = req.body.empty() ? json::object() : json::parse(req.body);
        if (!body.is_object()) {
            throw HttpError{400, "invalid_argument", "body must be a JSON object"};
        }
        TrajectoryOptions topt = config.trajectory;
        topt.threads           = config.threads;
        if (body.contains("views")) {
            if (!body["views"].is_number_integer() || body["views"].get<int>() < 1) {
                throw HttpError{400, "invalid_argument", "'views' must be a positive integer"};
            }
            topt.views = body["views"].get<int>();
        }
        InpaintConfig icfg = config.inpaint;
        icfg.threads       = config.threads;
        if (body.contains("iterations")) {
            if (!body["iterations"].is_number_integer()) {
                throw HttpError{400, "invalid_argument", "'iterations' must be an integer"};
            }
            icfg.iterations = body["iterations"].get<int>();
        }
        icfg.validate();
        const bool conditioning = body.value("conditioning", true);
        const std::string kind  = body.value("inpainter", std::string("builtin"));
        std::shared_ptr<Inpainter> inpainter;
        if (kind == "builtin") {
            inpainter = std::make_shared<BuiltinInpainter>();
        } else if (kind == "external-dir") {
            if (config.externalDir.empty()) {
                throw HttpError{400, "invalid_argument", "no external inpainter directory is configured"};
            }
            inpainter = std::make_shared<ExternalDirInpainter>(config.externalDir, config.externalCommand,
                                                               config.externalDepth);
        } else {
            throw HttpError{400, "invalid_argument", "inpainter must be builtin or external-dir, got '" + kind + "'"};
        }

        auto lease = acquire();
        RemovalEntry removal;
        std::shared_ptr<const GaussianScene> after;
        {
            std::lock_guard lock(stateMutex);
            if (undo.empty() || !std::holds_alternative<RemovalEntry>(undo.back())) {
                throw HttpError{400, "invalid_argument", "inpainting needs a removal to fill (POST /remove first)"};
            }
            removal = std::get<RemovalEntry>(undo.back());
            after   = current;
        }

        res.set_chunked_content_provider(
            "application/x-ndjson",
            [this, lease, removal, after, topt, icfg, conditioning, inpainter](std::size_t, httplib::DataSink &sink) {
                auto emit = [&](const json &j) {
                    const std::string line = j.dump() + "\n";
                    sink.write(line.data(), line.size());
                };
                try {
                    const auto traj = virtualTrajectory(*removal.before, *after, cameras, removal.record.ids, topt);
                    emit({{"event", "trajectory"},
                          {"views", traj.cameras.size()},
                          {"radius", traj.radius},
                          {"mask_fraction", traj.maskFraction},
                          {"warnings", traj.warnings}});
                    auto result = inpaintScene(*removal.before, *after, traj.cameras, removal.record.ids, *inpainter,
                                               icfg, conditioning, [&](const InpaintProgress &p) {
                                                   emit({{"event", "progress"},
                                                         {"stage", p.stage},
                                                         {"step", p.step},
                                                         {"total", p.total},
                                                         {"loss", p.loss}});
                                               });
                    json done{{"event", "done"},
                              {"initialized", result.initialized},
                              {"pruned", result.pruned},
                              {"initial_loss", result.initialLoss},
                              {"final_loss", result.finalLoss},
                              {"splat_count", result.scene.size()}};
                    {
                        std::lock_guard lock(stateMutex);
                        current = std::make_shared<const GaussianScene>(std::move(result.scene));
                        undo.emplace_back(InpaintEntry{after});
                        done["undo_depth"] = undo.size();
                    }
                    lease->release();
                    emit(done);
                } catch (const Error &e) {
                    lease->release();
                    emit({{"event", "error"}, {"error", e.kind()}, {"message", e.what()}});
                } catch (const std::exception &e) {
                    lease->release();
                    emit({{"event", "error"}, {"error", "internal"}, {"message", e.what()}});
                }
                sink.done();
                return true;
            });
    }
};

Service::Service(GaussianScene scene, std::vector<Camera> cameras, ServiceConfig config)
    : mImpl(std::make_unique<Impl>()) {
    scene.validate();
    config.inpaint.validate();
    mImpl->config  = std::move(config);
    mImpl->cameras = std::move(cameras);
    mImpl->current = std::make_shared<const GaussianScene>(std::move(scene));
    mImpl->routes();
}

Service::~Service() {
    stop();
}

int
Service::bind() {
    if (mImpl->port >= 0) {
        return mImpl->port;
    }
    const auto &c = mImpl->config;
    if (c.port == 0) {
        mImpl->port = mImpl->server.bind_to_any_port(c.host);
    } else if (mImpl->server.bind_to_port(c.host, c.port)) {
        mImpl->port = c.port;
    }
    if (mImpl->port <= 0) {
        mImpl->port = -1;
        throw IoError("cannot bind " + c.host + ":" + std::to_string(c.port));
    }
    return mImpl->port;
}

void
Service::listen() {
    bind();
    mImpl->server.listen_after_bind();
}

void
Service::stop() {
    mImpl->server.stop();
}

std::shared_ptr<const GaussianScene>
Service::scene() const {
    return mImpl->snapshot();
}

} // namespace splatedit
