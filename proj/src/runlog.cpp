#include "vpat/runlog.hpp"

#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "vpat/adversary.hpp"

namespace vpat::runlog {

using nlohmann::json;

std::string RunLog::scenario_id() const { return header.value("scenario_id", std::string()); }
std::string RunLog::algorithm_id() const { return header.value("algorithm", std::string()); }
std::string RunLog::algorithm_version() const { return header.value("algorithm_version", std::string()); }

std::vector<std::string> RunLog::vuts() const {
  return header.value("vuts", std::vector<std::string>{});
}

world::ScenarioMap RunLog::map() const {
  if (!header.contains("map")) throw Error(ErrorCode::kSchema, "log header carries no map");
  return world::parse_map(header["map"]);
}

double RunLog::dt() const { return header.value("dt", world::kDefaultDt); }

std::vector<EventRecord> RunLog::events_of(const std::string& type) const {
  std::vector<EventRecord> out;
  for (const auto& e : events) {
    if (e.type == type) out.push_back(e);
  }
  return out;
}

json tick_to_json(const TickRecord& r) {
  json ents = json::array();
  for (const auto& [id, e] : r.entities) ents.push_back(e);
  json sig = json::object();
  for (const auto& [id, phases] : r.signals) {
    json p = json::array();
    for (auto ph : phases) p.push_back(world::to_string(ph));
    sig[id] = p;
  }
  return {{"record", "tick"}, {"tick", r.tick}, {"t", r.t}, {"entities", ents}, {"signals", sig},
          {"intensity", r.intensity}};
}

TickRecord tick_from_json(const json& j) {
  TickRecord r;
  r.tick = j.at("tick").get<std::int64_t>();
  r.t = j.at("t").get<double>();
  for (const auto& e : j.at("entities")) {
    auto st = e.get<world::EntityState>();
    r.entities[st.id] = st;
  }
  const json signals = j.value("signals", json::object());
  for (const auto& [id, p] : signals.items()) {
    std::vector<world::Phase> phases;
    for (const auto& ph : p) phases.push_back(world::phase_from_string(ph.get<std::string>()));
    r.signals[id] = phases;
  }
  r.intensity = j.value("intensity", 0.0);
  return r;
}

void Writer::line(const json& j) {
  text_ += j.dump();
  text_ += '\n';
}

void Writer::header(const json& h) {
  json j = h;
  j["record"] = "header";
  j["format_version"] = kFormatVersion;
  line(j);
}

void Writer::tick(const TickRecord& r) { line(tick_to_json(r)); }

void Writer::message(const MessageRecord& r) {
  json j = r.envelope;
  j["record"] = "msg";
  j["tick"] = r.tick;
  j["receivers"] = r.receivers;
  line(j);
}

void Writer::event(const EventRecord& r) {
  line({{"record", "event"}, {"tick", r.tick}, {"t", r.t}, {"type", r.type}, {"data", r.data}});
}

void Writer::footer(const json& f) {
  json j = f;
  j["record"] = "footer";
  line(j);
}

RunLog Writer::finish() const { return parse(text_); }

RunLog parse(const std::string& text) {
  RunLog log;
  log.text = text;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  std::int64_t last_tick = -1;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kSchema, "log line " + std::to_string(lineno) + ": " + e.what());
    }
    const std::string kind = j.value("record", std::string());
    try {
      if (kind == "header") {
        if (j.value("format_version", 0) != kFormatVersion) throw Error(ErrorCode::kVersion, "unsupported log version");
        log.header = j;
        have_header = true;
      } else if (kind == "tick") {
        TickRecord r = tick_from_json(j);
        if (r.tick <= last_tick) throw Error(ErrorCode::kSchema, "tick records must increase");
        last_tick = r.tick;
        log.ticks.push_back(std::move(r));
      } else if (kind == "msg") {
        MessageRecord m;
        m.tick = j.at("tick").get<std::int64_t>();
        m.envelope = j.get<bus::MessageEnvelope>();
        m.receivers = j.value("receivers", std::vector<std::string>{});
        log.messages.push_back(std::move(m));
      } else if (kind == "event") {
        log.events.push_back({j.at("tick").get<std::int64_t>(), j.at("t").get<double>(),
                              j.at("type").get<std::string>(), j.value("data", json::object())});
      } else if (kind == "footer") {
        log.footer = j;
      } else {
        throw Error(ErrorCode::kSchema, "unknown record '" + kind + "'");
      }
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kSchema, "log line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (!have_header) throw Error(ErrorCode::kSchema, "log without header");
  return log;
}

RunLog load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void save(const RunLog& log, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write '" + path + "'");
  out << log.text;
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

credibility::SeriesMatrix extract_series(const RunLog& log) {
  credibility::SeriesMatrix m;
  m.scenario_id = log.scenario_id();
  m.dt = log.dt();
  std::set<std::string> ids;
  for (const auto& t : log.ticks) {
    for (const auto& [id, e] : t.entities) {
      if (e.kind != world::EntityKind::kRsu) ids.insert(id);
    }
  }
  static const char* kChannels[] = {"x", "y", "speed", "accel"};
  for (const auto& id : ids) {
    for (const char* c : kChannels) m.columns.push_back(id + "." + c);
  }
  const std::size_t n = log.ticks.size();
  m.rows.assign(n, std::vector<double>(m.columns.size(), 0.0));
  std::size_t col = 0;
  for (const auto& id : ids) {
    std::vector<int> have(n, 0);
    for (std::size_t k = 0; k < n; ++k) {
      auto it = log.ticks[k].entities.find(id);
      if (it == log.ticks[k].entities.end()) continue;
      const auto& e = it->second;
      m.rows[k][col] = e.pose.x;
      m.rows[k][col + 1] = e.pose.y;
      m.rows[k][col + 2] = e.speed;
      m.rows[k][col + 3] = e.accel;
      have[k] = 1;
    }
    // Hold the nearest recorded sample; earlier wins on equal distance.
    for (std::size_t k = 0; k < n; ++k) {
      if (have[k]) continue;
      std::size_t best = n;
      for (std::size_t d = 1; d < n && best == n; ++d) {
        if (k >= d && have[k - d]) {
          best = k - d;
        } else if (k + d < n && have[k + d]) {
          best = k + d;
        }
      }
      if (best == n) continue;
      for (std::size_t c = 0; c < 4; ++c) m.rows[k][col + c] = m.rows[best][col + c];
    }
    col += 4;
  }
  return m;
}

std::vector<std::optional<double>> tick_min_ttc(const RunLog& log, const std::string& vut, double horizon,
                                                double d_col) {
  std::vector<std::optional<double>> out;
  for (const auto& t : log.ticks) {
    if (!t.entities.count(vut)) continue;
    out.push_back(adversary::min_ttc(t.entities, vut, horizon, d_col));
  }
  return out;
}

double hazard_fraction(const RunLog& log, const std::string& vut, double threshold) {
  return adversary::hazard_fraction(tick_min_ttc(log, vut), threshold);
}

}  // namespace vpat::runlog
