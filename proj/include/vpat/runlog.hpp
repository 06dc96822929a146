#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "vpat/bus.hpp"
#include "vpat/credibility.hpp"
#include "vpat/world.hpp"

namespace vpat::runlog {

inline constexpr int kFormatVersion = 1;

struct TickRecord {
  std::int64_t tick = 0;
  double t = 0.0;
  std::map<std::string, world::EntityState> entities;
  std::map<std::string, std::vector<world::Phase>> signals;
  double intensity = 0.0;
};

struct MessageRecord {
  std::int64_t tick = 0;
  bus::MessageEnvelope envelope;
  std::vector<std::string> receivers;
};

struct EventRecord {
  std::int64_t tick = 0;
  double t = 0.0;
  std::string type;  // takeover, release, collision, spawn, despawn, aut_timeout, ...
  nlohmann::json data;
};

/// Parsed JSONL log. `text` keeps the exact bytes it came from.
struct RunLog {
  nlohmann::json header;
  std::vector<TickRecord> ticks;
  std::vector<MessageRecord> messages;
  std::vector<EventRecord> events;
  nlohmann::json footer;
  std::string text;

  std::string scenario_id() const;
  std::string algorithm_id() const;
  std::string algorithm_version() const;
  std::vector<std::string> vuts() const;
  world::ScenarioMap map() const;
  double dt() const;
  std::vector<EventRecord> events_of(const std::string& type) const;
};

/// Serializes records one line at a time; the output is the log.
class Writer {
 public:
  void header(const nlohmann::json& h);
  void tick(const TickRecord& r);
  void message(const MessageRecord& r);
  void event(const EventRecord& r);
  void footer(const nlohmann::json& f);

  const std::string& text() const { return text_; }
  RunLog finish() const;

 private:
  void line(const nlohmann::json& j);
  std::string text_;
};

nlohmann::json tick_to_json(const TickRecord& r);
TickRecord tick_from_json(const nlohmann::json& j);

RunLog parse(const std::string& text);
RunLog load(const std::string& path);
void save(const RunLog& log, const std::string& path);

/// FNV-1a 64-bit over the bytes, as 16 hex digits.
std::string fnv1a_hex(const std::string& bytes);

/// Per-tick kinematics (x, y, speed, accel) of every moving entity. An
/// entity missing at a tick holds its nearest recorded sample.
credibility::SeriesMatrix extract_series(const RunLog& log);

/// Minimum 2D TTC of `vut` per tick (nullopt when nothing is on course).
std::vector<std::optional<double>> tick_min_ttc(const RunLog& log, const std::string& vut,
                                                double horizon = 10.0, double d_col = 4.0);
double hazard_fraction(const RunLog& log, const std::string& vut, double threshold = 2.5);

}  // namespace vpat::runlog
