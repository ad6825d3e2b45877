#pragma once

// Line-delimited JSON logging.

#include <ostream>
#include <string_view>

#include <nlohmann/json.hpp>

namespace elucid {

class Logger {
 public:
  // A null stream discards everything.
  explicit Logger(std::ostream* out = nullptr) : out_(out) {}

  void log(std::string_view level, std::string_view event, nlohmann::json fields = nlohmann::json::object()) const;
  void info(std::string_view event, nlohmann::json fields = nlohmann::json::object()) const {
    log("info", event, std::move(fields));
  }
  void warn(std::string_view event, nlohmann::json fields = nlohmann::json::object()) const {
    log("warn", event, std::move(fields));
  }

 private:
  std::ostream* out_;
};

}  // namespace elucid
