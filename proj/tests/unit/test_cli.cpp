// Copyright Contributors to the splatedit project
// SPDX-License-Identifier: Apache-2.0

// Drives the splatedit binary as a subprocess.

#include <splatedit/camera.hpp>
#include <splatedit/image_io.hpp>
#include <splatedit/ply.hpp>
#include <splatedit/synth.hpp>

#include <gtest/gtest.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include <csignal>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include "test_scenes.hpp"

using namespace splatedit;
using namespace splatedit::testing;
using nlohmann::json;
namespace fs = std::filesystem;

extern char **environ;

namespace {

struct Outcome {
    int code = -1;
    std::string out, err;
};

std::string
slurp(const fs::path &p) {
    std::ifstream in(p);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

class CliTest : public ::testing::Test {
  protected:
    Outcome
    run(const std::string &args, const std::string &env = "") {
        const std::string cmd = env + " " SPLATEDIT_CLI " " + args + " >" + (dir / "stdout").string() + " 2>" +
                                (dir / "stderr").string();
        const int status = std::system(cmd.c_str());
        return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(dir / "stdout"), slurp(dir / "stderr")};
    }
    std::string
    p(const std::string &name) const {
        return (dir / name).string();
    }

    TempDir dir{"cli"};
};

std::vector<std::string>
lines(const std::string &s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    for (std::string l; std::getline(in, l);) {
        out.push_back(l);
    }
    return out;
}

} // namespace

TEST_F(CliTest, PipelineOnTwoBlobs) {
    const std::string spec = SPLATEDIT_DATA_DIR "/two_blobs.toml";
    auto r                 = run("synth --spec " + spec + " --out " + p("s"));
    ASSERT_EQ(r.code, 0) << r.err;
    const auto synth = synthScene(loadSynthSpec(spec));
    EXPECT_TRUE(bitwiseEqual(loadScene(dir / "s/scene.ply"), synth.scene));
    EXPECT_EQ(loadCameras(dir / "s/cameras.json").size(), synth.cameras.size());

    r = run("associate --scene " + p("s/scene.ply") + " --cameras " + p("s/cameras.json") + " --masks " +
            p("s/labels") + " --out " + p("a"));
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(json::parse(r.out)["objects"], 2);
    EXPECT_TRUE(fs::exists(dir / "a/database.json"));

    r = run("distill --scene " + p("s/scene.ply") + " --cameras " + p("s/cameras.json") + " --labels " +
            p("a/labels") + " --iterations 300 --out " + p("d.ply") + " --loss-csv " + p("loss.csv"));
    ASSERT_EQ(r.code, 0) << r.err;
    const auto csv = lines(slurp(dir / "loss.csv"));
    ASSERT_EQ(csv.size(), 301u);
    EXPECT_EQ(csv[0], "iteration,view,obj,space,total");
    const auto distilled = loadScene(dir / "d.ply");
    ASSERT_EQ(distilled.size(), synth.scene.size());

    // Association ids are arbitrary; check the distilled ids partition the blobs like the truth does.
    std::map<std::pair<ObjectId, ObjectId>, int> pairs;
    for (std::size_t i = 0; i < distilled.size(); ++i) {
        ++pairs[{synth.scene.gaussians[i].objectId.value_or(0), distilled.gaussians[i].objectId.value_or(0)}];
    }
    int agree = 0;
    std::map<ObjectId, ObjectId> truthToLearned;
    for (const auto &[k, n]: pairs) {
        if (!truthToLearned.count(k.first) || pairs[{k.first, truthToLearned[k.first]}] < n) {
            truthToLearned[k.first] = k.second;
        }
    }
    for (const auto &[t, l]: truthToLearned) {
        agree += pairs[{t, l}];
    }
    EXPECT_GE(agree, static_cast<int>(0.98 * distilled.size()));
    const ObjectId target = truthToLearned.at(1);

    r = run("remove --scene " + p("d.ply") + " --ids " + std::to_string(target) + " --out " + p("r.ply") +
            " --record " + p("rec.json"));
    ASSERT_EQ(r.code, 0) << r.err;
    r = run("undo --scene " + p("r.ply") + " --record " + p("rec.json") + " --out " + p("u.ply"));
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(slurp(dir / "u.ply"), slurp(dir / "d.ply"));

    r = run("trajectory --scene " + p("r.ply") + " --record " + p("rec.json") + " --cameras " +
            p("s/cameras.json") + " --views 6 --out " + p("v.json"));
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(loadCameras(dir / "v.json").size(), 6u);

    r = run("inpaint --scene " + p("r.ply") + " --record " + p("rec.json") + " --cameras " + p("v.json") +
            " --iterations 20 --progress --out " + p("f.ply") + " --views-out " + p("vo"));
    ASSERT_EQ(r.code, 0) << r.err;
    const auto summary = json::parse(r.out);
    EXPECT_GT(summary["initialized"].get<int>(), 0);
    EXPECT_EQ(loadScene(dir / "f.ply").size(), summary["splats"].get<std::size_t>());
    EXPECT_EQ(json::parse(lines(r.err).back())["stage"], "optimize");

    r = run("render --scene " + p("f.ply") + " --cameras " + p("v.json") + " --channels color --out " + p("rf"));
    ASSERT_EQ(r.code, 0) << r.err;
    fs::create_directories(dir / "ref");
    fs::create_directories(dir / "masks");
    for (int i = 0; i < 6; ++i) {
        char n[32];
        std::snprintf(n, sizeof n, "view_%03d", i);
        fs::copy_file(dir / "vo" / (std::string(n) + "_filled.png"), dir / "ref" / (std::string(n) + "_color.png"));
        fs::copy_file(dir / "vo" / (std::string(n) + "_mask.png"), dir / "masks" / (std::string(n) + "_color.png"));
    }
    r = run("metrics --rendered " + p("rf") + " --reference " + p("ref") + " --masks " + p("masks") + " --out " +
            p("m.json") + " --csv " + p("m.csv"));
    ASSERT_EQ(r.code, 0) << r.err;
    const auto report = json::parse(slurp(dir / "m.json"));
    EXPECT_EQ(report["mean"], json::parse(r.out));
    EXPECT_GT(report["mean"]["masked_psnr"].get<double>(), 15.0);
    EXPECT_EQ(lines(slurp(dir / "m.csv")).size(), 8u); // header, six views, mean
}

TEST_F(CliTest, EmptySceneRendersBackground) {
    GaussianScene empty;
    empty.background = Vec3(0.2, 0.4, 0.6);
    saveScene(empty, dir / "empty.ply");
    Camera cam = Camera::lookAt(Vec3(0, 0, -3), Vec3::Zero(), Vec3(0, -1, 0), 40, 30, 35, 35, 20, 15);
    saveCameras(dir / "cam.json", {cam});
    const auto r = run("render --scene " + p("empty.ply") + " --cameras " + p("cam.json") + " --out " + p("o"));
    ASSERT_EQ(r.code, 0) << r.err;
    const auto img = decodePng(slurp(dir / "o/view_000_color.png"));
    ASSERT_EQ(img.samples.size(), 40u * 30u * 3u);
    for (std::size_t i = 0; i < img.samples.size(); i += 3) {
        ASSERT_EQ(img.samples[i], 51);
        ASSERT_EQ(img.samples[i + 1], 102);
        ASSERT_EQ(img.samples[i + 2], 153);
    }
}

TEST_F(CliTest, ErrorsAreOneJsonLine) {
    const auto synth = synthScene(loadSynthSpec(SPLATEDIT_DATA_DIR "/two_blobs.toml"));
    saveScene(synth.scene, dir / "scene.ply");

    auto r = run("remove --scene " + p("scene.ply") + " --ids 42 --out " + p("x.ply") + " --record " + p("x.json"));
    EXPECT_NE(r.code, 0);
    ASSERT_EQ(lines(r.err).size(), 1u) << r.err;
    auto e = json::parse(r.err);
    EXPECT_EQ(e["error"], "unknown_object");
    EXPECT_NE(e["message"].get<std::string>().find("42"), std::string::npos);
    EXPECT_FALSE(fs::exists(dir / "x.ply"));

    r = run("remove --scene " + p("scene.ply"));
    EXPECT_EQ(r.code, 2);
    EXPECT_EQ(json::parse(r.err)["error"], "usage");

    r = run("frobnicate");
    EXPECT_EQ(r.code, 2);

    std::ofstream(dir / "bad.ply") << "ply\nformat ascii 1.0\nend_header\n";
    r = run("render --scene " + p("bad.ply") + " --cameras " + p("scene.ply") + " --out " + p("o"));
    EXPECT_EQ(r.code, 1);
    EXPECT_EQ(lines(r.err).size(), 1u);
    EXPECT_NO_THROW(json::parse(r.err));
}

TEST_F(CliTest, ConfigFileAndEnvironment) {
    const auto synth = synthScene(loadSynthSpec(SPLATEDIT_DATA_DIR "/two_blobs.toml"));
    saveScene(synth.scene, dir / "scene.ply");
    saveCameras(dir / "cams.json", synth.cameras);
    std::ofstream(dir / "c.toml") << "[render]\nscene = \"" << p("scene.ply") << "\"\ncameras = \"" << p("cams.json")
                                  << "\"\nout = \"" << p("fromfile") << "\"\nviews = [1, 2]\n";

    auto r = run("--config " + p("c.toml") + " render");
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(fs::exists(dir / "fromfile/view_001_color.png"));
    EXPECT_TRUE(fs::exists(dir / "fromfile/view_002_color.png"));
    EXPECT_FALSE(fs::exists(dir / "fromfile/view_000_color.png"));

    // Flags beat the file, the file beats the environment, the environment fills what is left.
    r = run("--config " + p("c.toml") + " render", "SPLATEDIT_RENDER_OUT=" + p("fromenv"));
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_FALSE(fs::exists(dir / "fromenv"));
    r = run("--config " + p("c.toml") + " render --out " + p("fromflag"), "SPLATEDIT_RENDER_OUT=" + p("fromenv"));
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(fs::exists(dir / "fromflag/view_001_color.png"));
    EXPECT_FALSE(fs::exists(dir / "fromenv"));
    r = run("render --views 0", "SPLATEDIT_RENDER_SCENE=" + p("scene.ply") + " SPLATEDIT_RENDER_CAMERAS=" +
                                    p("cams.json") + " SPLATEDIT_RENDER_OUT=" + p("fromenv"));
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(fs::exists(dir / "fromenv/view_000_color.png"));
}

TEST_F(CliTest, ServeAnswersAndStopsOnSignal) {
    const auto synth = synthScene(loadSynthSpec(SPLATEDIT_DATA_DIR "/two_blobs.toml"));
    saveScene(synth.scene, dir / "scene.ply");
    saveCameras(dir / "cams.json", synth.cameras);

    int out[2];
    ASSERT_EQ(pipe(out), 0);
    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, out[1], STDOUT_FILENO);
    posix_spawn_file_actions_addclose(&actions, out[0]);
    const std::string scene = p("scene.ply"), cams = p("cams.json");
    std::vector<std::string> args{SPLATEDIT_CLI, "serve", "--scene", scene, "--cameras", cams, "--port", "0"};
    std::vector<char *> argv;
    for (auto &a: args) {
        argv.push_back(a.data());
    }
    argv.push_back(nullptr);
    pid_t pid = 0;
    ASSERT_EQ(posix_spawn(&pid, SPLATEDIT_CLI, &actions, nullptr, argv.data(), environ), 0);
    posix_spawn_file_actions_destroy(&actions);
    close(out[1]);

    std::string first;
    char c;
    while (read(out[0], &c, 1) == 1 && c != '\n') {
        first += c;
    }
    close(out[0]);
    const auto listening = json::parse(first);
    EXPECT_EQ(listening["event"], "listening");

    httplib::Client client("127.0.0.1", listening["port"].get<int>());
    const auto meta = client.Get("/scene/meta");
    ASSERT_TRUE(meta);
    EXPECT_EQ(json::parse(meta->body)["splat_count"], synth.scene.size());

    kill(pid, SIGTERM);
    int status = 0;
    waitpid(pid, &status, 0);
    EXPECT_TRUE(WIFEXITED(status));
    EXPECT_EQ(WEXITSTATUS(status), 0);
}
