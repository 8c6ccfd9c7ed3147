// Copyright Contributors to the splatedit project
// SPDX-License-Identifier: Apache-2.0

// Batch front end: one subcommand per pipeline stage plus `serve`.
// Every long flag can also come from a TOML file (--config, one [subcommand] table per
// subcommand, keys spelled like the flags) or from SPLATEDIT_<SUBCOMMAND>_<FLAG>, in that order of precedence
// after the command line.
// Failures print one JSON line {"error": kind, "message": ...} on stderr.

#include <splatedit/assoc.hpp>
#include <splatedit/distill.hpp>
#include <splatedit/edit.hpp>
#include <splatedit/error.hpp>
#include <splatedit/image_io.hpp>
#include <splatedit/inpaint.hpp>
#include <splatedit/metrics.hpp>
#include <splatedit/ply.hpp>
#include <splatedit/raster.hpp>
#include <splatedit/service.hpp>
#include <splatedit/synth.hpp>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <pthread.h>
#include <thread>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace splatedit;

namespace {

int
defaultThreads() {
    return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

std::string
viewName(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "view_%03zu", i);
    return buf;
}

void
printJson(const json &j) {
    std::cout << j.dump() << std::endl;
}

void
warn(const std::string &message) {
    std::cerr << json{{"warning", message}}.dump() << std::endl;
}

json
readJson(const fs::path &path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    try {
        return json::parse(in);
    } catch (const json::exception &e) {
        throw LoadError(path.string() + ": " + e.what());
    }
}

void
writeJson(const fs::path &path, const json &j) {
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    std::ofstream out(path);
    if (!(out << j.dump(2) << '\n')) {
        throw IoError("cannot write " + path.string());
    }
}

void
prepareOutput(const fs::path &path) {
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
}

// Label maps aligned with a camera list: a manifest.json written by `associate`, or every PNG
// in name order matched to cameras by position.
std::pair<std::vector<Camera>, std::vector<LabelMap>>
loadLabelDir(const fs::path &dir, const std::vector<Camera> &cameras) {
    std::vector<Camera> cams;
    std::vector<LabelMap> labels;
    if (fs::exists(dir / "manifest.json")) {
        const json m = readJson(dir / "manifest.json");
        for (const auto &f: m.at("frames")) {
            const auto index = f.at("camera").get<std::size_t>();
            if (index >= cameras.size()) {
                throw InvalidArgument("label manifest refers to camera " + std::to_string(index) + " of " +
                                      std::to_string(cameras.size()));
            }
            cams.push_back(cameras[index]);
            labels.push_back(readLabelPng(dir / f.at("labels").get<std::string>()));
        }
        return {cams, labels};
    }
    std::vector<fs::path> files;
    for (const auto &e: fs::directory_iterator(dir)) {
        if (e.path().extension() == ".png") {
            files.push_back(e.path());
        }
    }
    std::sort(files.begin(), files.end());
    if (files.size() != cameras.size()) {
        throw InvalidArgument(dir.string() + " holds " + std::to_string(files.size()) + " label maps for " +
                              std::to_string(cameras.size()) + " cameras");
    }
    for (const auto &f: files) {
        labels.push_back(readLabelPng(f));
    }
    return {cameras, labels};
}

// PNG names present in a directory, sorted.
std::vector<std::string>
pngNames(const fs::path &dir) {
    std::vector<std::string> names;
    for (const auto &e: fs::directory_iterator(dir)) {
        if (e.path().extension() == ".png") {
            names.push_back(e.path().filename().string());
        }
    }
    std::sort(names.begin(), names.end());
    return names;
}

struct EditedScene {
    GaussianScene before;
    GaussianScene after;
    RemovalRecord record;
};

EditedScene
loadEdited(const fs::path &scenePath, const fs::path &recordPath) {
    EditedScene e;
    e.after  = loadScene(scenePath);
    e.record = removalFromJson(readJson(recordPath));
    e.before = restoreRemoval(e.after, e.record);
    return e;
}

// Long-flag options of a subcommand also read SPLATEDIT_<SUB>_<FLAG>.
void
addEnvNames(CLI::App *sub) {
    for (CLI::Option *opt: sub->get_options()) {
        const auto &names = opt->get_lnames();
        if (names.empty() || names.front() == "help") {
            continue;
        }
        std::string env = "SPLATEDIT_" + sub->get_name() + "_" + names.front();
        for (char &c: env) {
            c = c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
        }
        opt->envname(env);
    }
}

struct SynthArgs {
    fs::path spec, out;
    bool backgroundOnly = false;
};
struct AssociateArgs {
    fs::path scene, cameras, masks, out;
    double sigma       = kDefaultIouThreshold;
    double containment = kDefaultContainment;
    double keepRatio   = 0.0;
};
struct DistillArgs {
    fs::path scene, cameras, labels, out, lossCsv;
    DistillConfig config;
};
struct RenderArgs {
    fs::path scene, cameras, out;
    std::vector<std::size_t> views;
    std::vector<std::string> channels{"color"};
    bool raw    = false;
    int threads = defaultThreads();
};
struct RemoveArgs {
    fs::path scene, out, record;
    std::vector<int> ids;
    bool hull = true;
};
struct UndoArgs {
    fs::path scene, record, out;
};
struct TrajectoryArgs {
    fs::path scene, record, cameras, out;
    TrajectoryOptions options;
};
struct InpaintArgs {
    fs::path scene, record, cameras, out, viewsOut, externalDir;
    std::string inpainter = "builtin", externalCommand;
    bool externalDepth = false, noConditioning = false, progress = false;
    InpaintConfig config;
};
struct MetricsArgs {
    fs::path rendered, reference, masks, out, csv;
};
struct ServeArgs {
    fs::path scene, cameras;
    ServiceConfig config;
};

void
runSynth(const SynthArgs &a) {
    SynthSpec spec = loadSynthSpec(a.spec);
    if (a.backgroundOnly) {
        spec = backgroundOnly(spec);
    }
    const auto r = synthScene(spec);
    fs::create_directories(a.out / "labels");
    saveScene(r.scene, a.out / "scene.ply");
    saveCameras(a.out / "cameras.json", r.cameras);
    for (std::size_t i = 0; i < r.labels.size(); ++i) {
        writeLabelPng(a.out / "labels" / (viewName(i) + ".png"), r.labels[i]);
    }
    printJson({{"splats", r.scene.size()}, {"views", r.cameras.size()}, {"out", a.out.string()}});
}

void
runAssociate(const AssociateArgs &a) {
    const auto scene   = loadScene(a.scene);
    const auto cameras = loadCameras(a.cameras);
    const auto frames  = loadFrames(a.masks, cameras);
    LiftOptions lift;
    lift.keepRatio = a.keepRatio;
    const auto r   = associate(scene, cameras, frames, a.sigma, lift, a.containment);
    for (const auto &w: r.warnings) {
        warn(w);
    }
    fs::create_directories(a.out / "labels");
    writeJson(a.out / "database.json", r.database.toJson());
    json manifest{{"frames", json::array()}};
    for (std::size_t i = 0; i < r.labels.size(); ++i) {
        char name[48];
        std::snprintf(name, sizeof name, "frame_%03zu.png", i);
        writeLabelPng(a.out / "labels" / name, r.labels[i]);
        manifest["frames"].push_back({{"camera", frames[i].camera}, {"labels", name}});
    }
    writeJson(a.out / "labels" / "manifest.json", manifest);
    printJson({{"objects", r.database.size()}, {"frames", frames.size()}, {"warnings", r.warnings.size()}});
}

void
runDistill(const DistillArgs &a) {
    const auto scene          = loadScene(a.scene);
    const auto [cams, labels] = loadLabelDir(a.labels, loadCameras(a.cameras));
    std::ofstream csv;
    if (!a.lossCsv.empty()) {
        prepareOutput(a.lossCsv);
        csv.open(a.lossCsv);
        if (!csv) {
            throw IoError("cannot write " + a.lossCsv.string());
        }
        csv << "iteration,view,obj,space,total\n";
        csv.precision(10);
    }
    const auto out = distill(scene, cams, labels, a.config, [&](const DistillStep &s) {
        if (csv.is_open()) {
            csv << s.iteration << ',' << s.view << ',' << s.loss.obj << ',' << s.loss.space << ',' << s.loss.total
                << '\n';
        }
    });
    prepareOutput(a.out);
    saveScene(out, a.out);
    json objects = json::array();
    for (const auto &[id, n]: out.objectCounts()) {
        objects.push_back({{"id", id}, {"count", n}});
    }
    printJson({{"splats", out.size()}, {"objects", objects}});
}

void
runRender(const RenderArgs &a) {
    const auto scene   = loadScene(a.scene);
    const auto cameras = loadCameras(a.cameras);
    unsigned channels  = 0;
    for (const auto &c: a.channels) {
        channels |= c == "color" ? kColor : c == "depth" ? (kDepth | kAlpha) : c == "alpha" ? kAlpha : kIds;
    }
    std::vector<std::size_t> views = a.views;
    if (views.empty()) {
        for (std::size_t i = 0; i < cameras.size(); ++i) {
            views.push_back(i);
        }
    }
    fs::create_directories(a.out);
    for (const std::size_t v: views) {
        if (v >= cameras.size()) {
            throw InvalidArgument("view " + std::to_string(v) + " out of range (" + std::to_string(cameras.size()) +
                                  " cameras)");
        }
        const auto out         = render(scene, cameras[v], {.channels = channels, .threads = a.threads});
        const std::string stem = (a.out / viewName(v)).string();
        for (const auto &c: a.channels) {
            if (c == "color") {
                a.raw ? writeNpy(stem + "_color.npy", out.color) : writeColorPng(stem + "_color.png", out.color);
            } else if (c == "depth") {
                a.raw ? writeNpy(stem + "_depth.npy", out.normalizedDepth())
                      : writeDepthPng(stem + "_depth.png", out.normalizedDepth());
            } else if (c == "alpha") {
                ImageF rgb(out.alpha.width(), out.alpha.height(), 3);
                for (std::size_t p = 0; p < out.alpha.pixelCount(); ++p) {
                    rgb.data()[3 * p] = rgb.data()[3 * p + 1] = rgb.data()[3 * p + 2] = out.alpha.data()[p];
                }
                a.raw ? writeNpy(stem + "_alpha.npy", out.alpha) : writeColorPng(stem + "_alpha.png", rgb);
            } else {
                writeLabelPng(stem + "_id.png", out.ids, true);
            }
        }
    }
    printJson({{"views", views.size()}, {"out", a.out.string()}});
}

void
runRemove(const RemoveArgs &a) {
    const auto scene = loadScene(a.scene);
    std::vector<ObjectId> ids;
    for (int id: a.ids) {
        if (id < 0 || id > kMaxObjectId) {
            throw UnknownObject("unknown object id " + std::to_string(id));
        }
        ids.push_back(static_cast<ObjectId>(id));
    }
    const auto r = removeObjects(scene, ids, a.hull);
    prepareOutput(a.out);
    saveScene(r.scene, a.out);
    writeJson(a.record, removalToJson(r.record));
    printJson({{"removed", r.record.indices.size()}, {"hull_captured", r.record.hullCaptured},
               {"splats", r.scene.size()}});
}

void
runUndo(const UndoArgs &a) {
    const auto restored = restoreRemoval(loadScene(a.scene), removalFromJson(readJson(a.record)));
    prepareOutput(a.out);
    saveScene(restored, a.out);
    printJson({{"splats", restored.size()}});
}

void
runTrajectory(const TrajectoryArgs &a) {
    const auto e    = loadEdited(a.scene, a.record);
    const auto traj = virtualTrajectory(e.before, e.after, loadCameras(a.cameras), e.record.ids, a.options);
    for (const auto &w: traj.warnings) {
        warn(w);
    }
    prepareOutput(a.out);
    saveCameras(a.out, traj.cameras);
    printJson({{"views", traj.cameras.size()},
               {"radius", traj.radius},
               {"mask_fraction", traj.maskFraction},
               {"object_center", {traj.objectCenter.x(), traj.objectCenter.y(), traj.objectCenter.z()}},
               {"normal", {traj.normal.x(), traj.normal.y(), traj.normal.z()}}});
}

void
runInpaint(const InpaintArgs &a) {
    const auto e       = loadEdited(a.scene, a.record);
    const auto cameras = loadCameras(a.cameras);
    std::unique_ptr<Inpainter> inpainter;
    if (a.inpainter == "builtin") {
        inpainter = std::make_unique<BuiltinInpainter>();
    } else {
        if (a.externalDir.empty()) {
            throw InvalidArgument("--external-dir is required with --inpainter external-dir");
        }
        inpainter = std::make_unique<ExternalDirInpainter>(a.externalDir, a.externalCommand, a.externalDepth);
    }
    const auto r = inpaintScene(e.before, e.after, cameras, e.record.ids, *inpainter, a.config, !a.noConditioning,
                                [&](const InpaintProgress &p) {
                                    if (a.progress) {
                                        std::cerr << json{{"stage", p.stage},
                                                          {"step", p.step},
                                                          {"total", p.total},
                                                          {"loss", p.loss}}
                                                         .dump()
                                                  << '\n';
                                    }
                                });
    prepareOutput(a.out);
    saveScene(r.scene, a.out);
    if (!a.viewsOut.empty()) {
        fs::create_directories(a.viewsOut);
        for (std::size_t i = 0; i < r.views.size(); ++i) {
            const std::string stem = (a.viewsOut / viewName(i)).string();
            writeColorPng(stem + "_color.png", r.views[i].color);
            writeMaskPng(stem + "_mask.png", r.views[i].mask);
            writeColorPng(stem + "_filled.png", r.filled[i].color);
            writeDepthPng(stem + "_filled_depth.png", r.filled[i].depth);
        }
    }
    printJson({{"initialized", r.initialized},
               {"pruned", r.pruned},
               {"initial_loss", r.initialLoss},
               {"final_loss", r.finalLoss},
               {"splats", r.scene.size()}});
}

void
runMetrics(const MetricsArgs &a) {
    std::vector<ImageF> rendered, reference;
    std::vector<Mask> masks;
    const auto names = pngNames(a.rendered);
    if (names.empty()) {
        throw InvalidArgument(a.rendered.string() + " holds no PNG files");
    }
    for (const auto &n: names) {
        rendered.push_back(readColorPng(a.rendered / n));
        if (!fs::exists(a.reference / n)) {
            throw IoError("reference image " + (a.reference / n).string() + " is missing");
        }
        reference.push_back(readColorPng(a.reference / n));
        if (a.masks.empty()) {
            masks.emplace_back(rendered.back().width(), rendered.back().height(), 1, 1);
        } else {
            if (!fs::exists(a.masks / n)) {
                throw IoError("mask " + (a.masks / n).string() + " is missing");
            }
            masks.push_back(readMaskPng(a.masks / n));
        }
    }
    const auto report = evaluate(rendered, reference, masks, names);
    if (!a.out.empty()) {
        writeJson(a.out, report.toJson());
    }
    if (!a.csv.empty()) {
        prepareOutput(a.csv);
        std::ofstream(a.csv) << report.toCsv();
    }
    printJson(report.toJson()["mean"]);
}

void
runServe(const ServeArgs &a) {
    // Signals go to a dedicated thread that stops the server; handlers cannot do that safely.
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);

    Service service(loadScene(a.scene), loadCameras(a.cameras), a.config);
    const int port = service.bind();
    printJson({{"event", "listening"}, {"host", a.config.host}, {"port", port}});
    std::thread waiter([&] {
        int sig = 0;
        sigwait(&set, &sig);
        service.stop();
    });
    service.listen();
    pthread_kill(waiter.native_handle(), SIGTERM);
    waiter.join();
}

} // namespace

int
main(int argc, char **argv) {
    CLI::App app{"Object removal and inpainting for Gaussian splat scenes"};
    app.set_config("--config", "", "TOML file; [subcommand] tables with keys named like the long flags");
    app.require_subcommand(1);
    app.get_formatter()->column_width(40);

    SynthArgs synthA;
    auto *synth = app.add_subcommand("synth", "Generate a synthetic scene, ring cameras and oracle label maps");
    synth->add_option("--spec", synthA.spec, "Scene spec TOML")->required()->check(CLI::ExistingFile);
    synth->add_option("--out", synthA.out, "Output directory")->required();
    synth->add_flag("--background-only", synthA.backgroundOnly, "Drop blobs and close holes (oracle scene)");

    AssociateArgs assocA;
    auto *assoc = app.add_subcommand("associate", "Lift 2-D masks to consistent object ids");
    assoc->add_option("--scene", assocA.scene, "Scene PLY")->required()->check(CLI::ExistingFile);
    assoc->add_option("--cameras", assocA.cameras, "Cameras JSON")->required()->check(CLI::ExistingFile);
    assoc->add_option("--masks", assocA.masks, "Mask directory (label PNGs or manifest.json)")
        ->required()
        ->check(CLI::ExistingDirectory);
    assoc->add_option("--out", assocA.out, "Output directory")->required();
    assoc->add_option("--sigma", assocA.sigma, "GS-IoU match threshold")->capture_default_str();
    assoc->add_option("--containment", assocA.containment, "Fragment consolidation containment (<= 0 disables)")
        ->capture_default_str();
    assoc->add_option("--keep-ratio", assocA.keepRatio, "Keep the nearest fraction instead of clustering")
        ->capture_default_str();

    DistillArgs distA;
    auto *dist = app.add_subcommand("distill", "Train identity features and bake object ids");
    dist->add_option("--scene", distA.scene, "Scene PLY")->required()->check(CLI::ExistingFile);
    dist->add_option("--cameras", distA.cameras, "Cameras JSON")->required()->check(CLI::ExistingFile);
    dist->add_option("--labels", distA.labels, "Label map directory")->required()->check(CLI::ExistingDirectory);
    dist->add_option("--out", distA.out, "Output PLY")->required();
    dist->add_option("--loss-csv", distA.lossCsv, "Per-iteration loss CSV");
    dist->add_option("--iterations", distA.config.iterations)->capture_default_str();
    dist->add_option("--lambda", distA.config.lambda, "Spatial loss weight")->capture_default_str();
    dist->add_option("--k", distA.config.k, "Neighbours in the spatial loss")->capture_default_str();
    dist->add_option("--lr", distA.config.learningRate)->capture_default_str();
    dist->add_option("--classes", distA.config.classes, "0: one more than the largest label")->capture_default_str();
    dist->add_option("--seed", distA.config.seed)->capture_default_str();
    distA.config.threads = defaultThreads();
    dist->add_option("--threads", distA.config.threads)->capture_default_str();

    RenderArgs renderA;
    auto *rend = app.add_subcommand("render", "Render views to PNG (or .npy with --raw)");
    rend->add_option("--scene", renderA.scene, "Scene PLY")->required()->check(CLI::ExistingFile);
    rend->add_option("--cameras", renderA.cameras, "Cameras JSON")->required()->check(CLI::ExistingFile);
    rend->add_option("--out", renderA.out, "Output directory")->required();
    rend->add_option("--views", renderA.views, "Camera indices (default all)");
    rend->add_option("--channels", renderA.channels, "color, depth, alpha, id")
        ->check(CLI::IsMember({"color", "depth", "alpha", "id"}))
        ->capture_default_str();
    rend->add_flag("--raw", renderA.raw, "Write float .npy instead of PNG (ids stay PNG)");
    rend->add_option("--threads", renderA.threads)->capture_default_str();

    RemoveArgs removeA;
    auto *remove = app.add_subcommand("remove", "Remove objects and write an undo record");
    remove->add_option("--scene", removeA.scene, "Scene PLY")->required()->check(CLI::ExistingFile);
    remove->add_option("--ids", removeA.ids, "Object ids")->required();
    remove->add_flag("--hull,!--no-hull", removeA.hull, "Also remove splats inside the removed objects' hull")
        ->capture_default_str();
    remove->add_option("--out", removeA.out, "Edited PLY")->required();
    remove->add_option("--record", removeA.record, "Removal record JSON")->required();

    UndoArgs undoA;
    auto *undo = app.add_subcommand("undo", "Reinsert removed splats from a removal record");
    undo->add_option("--scene", undoA.scene, "Edited PLY")->required()->check(CLI::ExistingFile);
    undo->add_option("--record", undoA.record, "Removal record JSON")->required()->check(CLI::ExistingFile);
    undo->add_option("--out", undoA.out, "Restored PLY")->required();

    TrajectoryArgs trajA;
    auto *traj = app.add_subcommand("trajectory", "Virtual orbit around the removed objects");
    traj->add_option("--scene", trajA.scene, "Edited PLY")->required()->check(CLI::ExistingFile);
    traj->add_option("--record", trajA.record, "Removal record JSON")->required()->check(CLI::ExistingFile);
    traj->add_option("--cameras", trajA.cameras, "Training cameras JSON")->required()->check(CLI::ExistingFile);
    traj->add_option("--out", trajA.out, "Virtual cameras JSON")->required();
    traj->add_option("--views", trajA.options.views)->capture_default_str();
    traj->add_option("--keep-fraction", trajA.options.keepFraction)->capture_default_str();
    traj->add_option("--min-area", trajA.options.minArea)->capture_default_str();
    traj->add_option("--max-area", trajA.options.maxArea)->capture_default_str();
    trajA.options.threads = defaultThreads();
    traj->add_option("--threads", trajA.options.threads)->capture_default_str();

    InpaintArgs inpA;
    auto *inp = app.add_subcommand("inpaint", "Fill the never-seen region and optimise new splats");
    inp->add_option("--scene", inpA.scene, "Edited PLY")->required()->check(CLI::ExistingFile);
    inp->add_option("--record", inpA.record, "Removal record JSON")->required()->check(CLI::ExistingFile);
    inp->add_option("--cameras", inpA.cameras, "Virtual cameras JSON")->required()->check(CLI::ExistingFile);
    inp->add_option("--out", inpA.out, "Final PLY")->required();
    inp->add_option("--views-out", inpA.viewsOut, "Directory for virtual views, masks and fills");
    inp->add_option("--inpainter", inpA.inpainter)
        ->check(CLI::IsMember({"builtin", "external-dir"}))
        ->capture_default_str();
    inp->add_option("--external-dir", inpA.externalDir, "Exchange directory for external-dir mode");
    inp->add_option("--external-command", inpA.externalCommand, "Run per view with the manifest path appended");
    inp->add_flag("--external-depth", inpA.externalDepth, "External program also writes depth");
    inp->add_flag("--no-conditioning", inpA.noConditioning, "Fill every view independently");
    inp->add_flag("--progress", inpA.progress, "Progress events as JSON lines on stderr");
    inp->add_option("--iterations", inpA.config.iterations)->capture_default_str();
    inp->add_option("--lambda1", inpA.config.lambda1, "D-SSIM weight")->capture_default_str();
    inp->add_option("--dc-lr", inpA.config.dcLearningRate)->capture_default_str();
    inp->add_option("--opacity-lr", inpA.config.opacityLearningRate)->capture_default_str();
    inp->add_option("--init-opacity", inpA.config.initOpacity)->capture_default_str();
    inp->add_option("--scale-factor", inpA.config.scaleFactor)->capture_default_str();
    inp->add_option("--max-init-splats", inpA.config.maxInitSplats)->capture_default_str();
    inp->add_option("--prune-opacity", inpA.config.pruneOpacity)->capture_default_str();
    inp->add_option("--seed", inpA.config.seed)->capture_default_str();
    inpA.config.threads = defaultThreads();
    inp->add_option("--threads", inpA.config.threads)->capture_default_str();

    MetricsArgs metA;
    auto *met = app.add_subcommand("metrics", "PSNR / SSIM / AMCR between two image sets");
    met->add_option("--rendered", metA.rendered, "Directory of rendered PNGs")
        ->required()
        ->check(CLI::ExistingDirectory);
    met->add_option("--reference", metA.reference, "Directory of reference PNGs with the same names")
        ->required()
        ->check(CLI::ExistingDirectory);
    met->add_option("--masks", metA.masks, "Directory of mask PNGs with the same names")
        ->check(CLI::ExistingDirectory);
    met->add_option("--out", metA.out, "Report JSON");
    met->add_option("--csv", metA.csv, "Report CSV");

    ServeArgs serveA;
    auto *serve = app.add_subcommand("serve", "HTTP editing service");
    serve->add_option("--scene", serveA.scene, "Scene PLY")->required()->check(CLI::ExistingFile);
    serve->add_option("--cameras", serveA.cameras, "Cameras JSON")->required()->check(CLI::ExistingFile);
    serve->add_option("--host", serveA.config.host)->capture_default_str();
    serve->add_option("--port", serveA.config.port, "0 picks a free port")->capture_default_str();
    serveA.config.threads = defaultThreads();
    serve->add_option("--threads", serveA.config.threads)->capture_default_str();
    serve->add_option("--iterations", serveA.config.inpaint.iterations)->capture_default_str();
    serve->add_option("--views", serveA.config.trajectory.views)->capture_default_str();
    serve->add_option("--external-dir", serveA.config.externalDir);
    serve->add_option("--external-command", serveA.config.externalCommand);
    serve->add_flag("--external-depth", serveA.config.externalDepth);

    for (CLI::App *sub: app.get_subcommands({})) {
        addEnvNames(sub);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        if (e.get_exit_code() == 0) {
            return app.exit(e);
        }
        std::cerr << json{{"error", "usage"}, {"message", e.what()}}.dump() << std::endl;
        return 2;
    }

    try {
        if (synth->parsed()) {
            runSynth(synthA);
        } else if (assoc->parsed()) {
            runAssociate(assocA);
        } else if (dist->parsed()) {
            runDistill(distA);
        } else if (rend->parsed()) {
            runRender(renderA);
        } else if (remove->parsed()) {
            runRemove(removeA);
        } else if (undo->parsed()) {
            runUndo(undoA);
        } else if (traj->parsed()) {
            runTrajectory(trajA);
        } else if (inp->parsed()) {
            runInpaint(inpA);
        } else if (met->parsed()) {
            runMetrics(metA);
        } else if (serve->parsed()) {
            runServe(serveA);
        }
    } catch (const Error &e) {
        std::cerr << json{{"error", e.kind()}, {"message", e.what()}}.dump() << std::endl;
        return 1;
    } catch (const fs::filesystem_error &e) {
        std::cerr << json{{"error", "io"}, {"message", e.what()}}.dump() << std::endl;
        return 1;
    } catch (const std::exception &e) {
        std::cerr << json{{"error", "internal"}, {"message", e.what()}}.dump() << std::endl;
        return 1;
    }
    return 0;
}
