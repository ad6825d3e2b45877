#include "elucid/log.hpp"

#include <chrono>
#include <ctime>

namespace elucid {

namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[40];
  std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms));
  return out;
}

}  // namespace

void Logger::log(std::string_view level, std::string_view event, nlohmann::json fields) const {
  if (!out_) return;
  nlohmann::json line = {{"ts", utc_now()}, {"level", level}, {"event", event}};
  for (auto& [k, v] : fields.items()) line[k] = v;
  *out_ << line.dump() << '\n' << std::flush;
}

}  // namespace elucid
