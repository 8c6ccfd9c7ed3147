// Copyright Contributors to the splatedit project
// SPDX-License-Identifier: Apache-2.0

// HTTP editing session: reads are concurrent, one mutation (remove, undo, inpaint) at a time,
// anything else gets 409. Progress of /inpaint streams as newline-delimited JSON.

#pragma once

#include <splatedit/camera.hpp>
#include <splatedit/edit.hpp>
#include <splatedit/inpaint.hpp>
#include <splatedit/scene.hpp>

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace splatedit {

struct ServiceConfig {
    std::string host = "127.0.0.1";
    int port         = 8080; // 0 picks a free port
    int threads      = 1;    // render threads per request
    InpaintConfig inpaint;
    TrajectoryOptions trajectory;
    bool hull = true; // default for POST /remove
    // external-dir inpainter; unavailable over HTTP unless a directory is configured
    std::filesystem::path externalDir;
    std::string externalCommand;
    bool externalDepth = false;
};

class Service {
  public:
    Service(GaussianScene scene, std::vector<Camera> cameras, ServiceConfig config = {});
    ~Service();
    Service(const Service &)            = delete;
    Service &operator=(const Service &) = delete;

    /// Binds the socket and returns the port. Throws IoError when binding fails.
    int bind();
    /// Serves until stop(); binds first if needed.
    void listen();
    void stop();

    /// Snapshot of the current scene.
    std::shared_ptr<const GaussianScene> scene() const;

  private:
    struct Impl;
    std::unique_ptr<Impl> mImpl;
};

} // namespace splatedit
