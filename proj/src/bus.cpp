#include "vpat/bus.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>

namespace vpat::bus {

using nlohmann::json;

void ChannelConfig::validate() const {
  if (name.empty()) throw Error(ErrorCode::kConfig, "channel without a name");
  if (!(base_latency >= 0.0) || !(jitter >= 0.0)) {
    throw Error(ErrorCode::kConfig, "channel '" + name + "': latency and jitter must be >= 0");
  }
  if (!(drop_prob >= 0.0 && drop_prob <= 1.0)) {
    throw Error(ErrorCode::kConfig, "channel '" + name + "': drop_prob must be in [0, 1]");
  }
  if (!(range > 0.0)) throw Error(ErrorCode::kConfig, "channel '" + name + "': range must be > 0");
}

ChannelConfig platform_default() { return {"platform", ChannelClass::kPlatform, 0.02, 0.01, 0.0, kUnlimitedRange}; }
ChannelConfig rsu_default() { return {"rsu", ChannelClass::kBroadcast, 0.05, 0.10, 0.0, 1000.0}; }
ChannelConfig v2v_default() { return {"v2v", ChannelClass::kBroadcast, 0.02, 0.03, 0.0, 1000.0}; }

namespace {
constexpr std::pair<PayloadType, const char*> kPayloads[] = {
    {PayloadType::kStateShare, "state_share"},
    {PayloadType::kIntentShare, "intent_share"},
    {PayloadType::kDecisionProposal, "decision_proposal"},
    {PayloadType::kControlCommand, "control_command"},
    {PayloadType::kSpat, "spat"},
    {PayloadType::kWarning, "warning"},
    {PayloadType::kTakeoverEvent, "takeover_event"},
    {PayloadType::kTaskControl, "task_control"},
};
}  // namespace

std::string to_string(PayloadType t) {
  for (const auto& [v, n] : kPayloads) {
    if (v == t) return n;
  }
  return "?";
}

PayloadType payload_from_string(const std::string& s) {
  for (const auto& [v, n] : kPayloads) {
    if (s == n) return v;
  }
  throw Error(ErrorCode::kSchema, "unknown payload type '" + s + "'");
}

std::string to_string(ChannelClass c) { return c == ChannelClass::kPlatform ? "platform" : "broadcast"; }

ChannelClass channel_class_from_string(const std::string& s) {
  if (s == "platform") return ChannelClass::kPlatform;
  if (s == "broadcast") return ChannelClass::kBroadcast;
  throw Error(ErrorCode::kSchema, "unknown channel class '" + s + "'");
}

void MessageBus::add_channel(const ChannelConfig& cfg) {
  cfg.validate();
  channels_[cfg.name] = cfg;
}

const ChannelConfig& MessageBus::channel(const std::string& name) const {
  auto it = channels_.find(name);
  if (it == channels_.end()) throw Error(ErrorCode::kConfig, "unknown channel '" + name + "'");
  return it->second;
}

PublishResult MessageBus::publish(MessageEnvelope env, double now, const world::Pose& sender_pose,
                                  Rng& rng, double sender_clock_offset) {
  const ChannelConfig& cfg = channel(env.channel);
  // Both draws are always taken so the random stream does not depend on
  // the drop outcome.
  const double u_drop = rng.uniform();
  const double u_jitter = rng.uniform();
  const Key key{env.sender, env.channel};
  env.seq = ++seq_[key];
  if (u_drop < cfg.drop_prob) return PublishResult::kDropped;

  env.send_sim = now;
  env.send_ts = now + sender_clock_offset;
  env.origin = {sender_pose.x, sender_pose.y};
  double deliver = now + cfg.base_latency + u_jitter * cfg.jitter;
  if (auto it = last_deliver_.find(key); it != last_deliver_.end()) deliver = std::max(deliver, it->second);
  env.deliver_ts = deliver;
  last_deliver_[key] = deliver;
  queue_.push_back(std::move(env));
  return PublishResult::kQueued;
}

std::vector<MessageEnvelope> MessageBus::deliver_due(double now) {
  std::vector<MessageEnvelope> due;
  auto split = std::stable_partition(queue_.begin(), queue_.end(),
                                     [now](const MessageEnvelope& e) { return e.deliver_ts > now; });
  std::move(split, queue_.end(), std::back_inserter(due));
  queue_.erase(split, queue_.end());
  std::sort(due.begin(), due.end(), [](const MessageEnvelope& a, const MessageEnvelope& b) {
    return std::tie(a.deliver_ts, a.sender, a.seq, a.channel) <
           std::tie(b.deliver_ts, b.sender, b.seq, b.channel);
  });
  return due;
}

json MessageBus::to_json() const {
  json chans = json::array();
  for (const auto& [n, c] : channels_) chans.push_back(c);
  json seqs = json::array();
  for (const auto& [k, v] : seq_) seqs.push_back({k.first, k.second, v});
  json last = json::array();
  for (const auto& [k, v] : last_deliver_) last.push_back({k.first, k.second, v});
  return {{"channels", chans}, {"queue", queue_}, {"seq", seqs}, {"last_deliver", last}};
}

MessageBus MessageBus::from_json(const json& j) {
  MessageBus bus;
  for (const auto& c : j.at("channels")) bus.add_channel(c.get<ChannelConfig>());
  bus.queue_ = j.at("queue").get<std::vector<MessageEnvelope>>();
  for (const auto& s : j.at("seq")) bus.seq_[{s[0].get<std::string>(), s[1].get<std::string>()}] = s[2].get<std::uint64_t>();
  for (const auto& s : j.at("last_deliver")) {
    bus.last_deliver_[{s[0].get<std::string>(), s[1].get<std::string>()}] = s[2].get<double>();
  }
  return bus;
}

std::vector<std::string> receivers(const MessageEnvelope& env, const ChannelConfig& cfg,
                                   const world::WorldState& world) {
  if (cfg.cls == ChannelClass::kPlatform) return {"platform"};
  std::vector<std::string> out;
  for (const auto& [id, e] : world.entities) {
    if (id == env.sender || !world::has_obu(e.kind)) continue;
    const double d = std::hypot(e.pose.x - env.origin.x, e.pose.y - env.origin.y);
    if (d <= cfg.range) out.push_back(id);
  }
  return out;
}

LatencyStats latency_stats(const std::vector<MessageEnvelope>& delivered) {
  if (delivered.empty()) throw Error(ErrorCode::kNoData, "no delivered messages");
  std::vector<double> lat;
  lat.reserve(delivered.size());
  for (const auto& e : delivered) lat.push_back(e.latency());
  std::sort(lat.begin(), lat.end());
  LatencyStats st;
  st.mean = std::accumulate(lat.begin(), lat.end(), 0.0) / static_cast<double>(lat.size());
  const auto rank = static_cast<std::size_t>(std::ceil(0.99 * static_cast<double>(lat.size())));
  st.p99 = lat[std::max<std::size_t>(rank, 1) - 1];
  st.max = lat.back();
  return st;
}

void to_json(json& j, const MessageEnvelope& e) {
  j = json{{"channel", e.channel}, {"sender", e.sender},     {"seq", e.seq},
           {"send_ts", e.send_ts}, {"send_sim", e.send_sim}, {"deliver_ts", e.deliver_ts},
           {"type", to_string(e.type)}, {"body", e.body}, {"origin", {e.origin.x, e.origin.y}}};
}

void from_json(const json& j, MessageEnvelope& e) {
  e.channel = j.at("channel").get<std::string>();
  e.sender = j.at("sender").get<std::string>();
  e.seq = j.at("seq").get<std::uint64_t>();
  e.send_ts = j.at("send_ts").get<double>();
  e.send_sim = j.at("send_sim").get<double>();
  e.deliver_ts = j.at("deliver_ts").get<double>();
  e.type = payload_from_string(j.at("type").get<std::string>());
  e.body = j.value("body", json::object());
  if (j.contains("origin")) e.origin = {j["origin"][0].get<double>(), j["origin"][1].get<double>()};
}

void to_json(json& j, const ChannelConfig& c) {
  j = json{{"name", c.name},
           {"class", to_string(c.cls)},
           {"base_latency", c.base_latency},
           {"jitter", c.jitter},
           {"drop_prob", c.drop_prob}};
  if (std::isfinite(c.range)) j["range"] = c.range;
}

void from_json(const json& j, ChannelConfig& c) {
  c.name = j.at("name").get<std::string>();
  c.cls = channel_class_from_string(j.value("class", std::string("platform")));
  c.base_latency = j.value("base_latency", 0.0);
  c.jitter = j.value("jitter", 0.0);
  c.drop_prob = j.value("drop_prob", 0.0);
  c.range = j.contains("range") && !j["range"].is_null() ? j["range"].get<double>() : kUnlimitedRange;
}

}  // namespace vpat::bus
