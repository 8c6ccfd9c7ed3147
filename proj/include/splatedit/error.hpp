// Copyright Contributors to the splatedit project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace splatedit {

// All library failures derive from Error. `kind()` is a short stable token used by the
// CLI and service to produce machine-parsable error lines.
class Error : public std::runtime_error {
  public:
    Error(std::string kind, const std::string &message)
        : std::runtime_error(message), mKind(std::move(kind)) {}

    const std::string &
    kind() const noexcept {
        return mKind;
    }

  private:
    std::string mKind;
};

class IoError : public Error {
  public:
    explicit IoError(const std::string &message) : Error("io", message) {}
};

class LoadError : public Error {
  public:
    explicit LoadError(const std::string &message) : Error("load", message) {}
};

class InvalidArgument : public Error {
  public:
    explicit InvalidArgument(const std::string &message) : Error("invalid_argument", message) {}
};

class RenderError : public Error {
  public:
    explicit RenderError(const std::string &message) : Error("render", message) {}
};

class UnknownObject : public Error {
  public:
    explicit UnknownObject(const std::string &message) : Error("unknown_object", message) {}
};

class InpaintError : public Error {
  public:
    explicit InpaintError(const std::string &message) : Error("inpaint", message) {}
};

} // namespace splatedit
