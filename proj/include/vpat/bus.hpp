#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "vpat/rng.hpp"
#include "vpat/world.hpp"

namespace vpat::bus {

enum class ChannelClass { kPlatform, kBroadcast };

inline constexpr double kUnlimitedRange = std::numeric_limits<double>::infinity();

struct ChannelConfig {
  std::string name;
  ChannelClass cls = ChannelClass::kPlatform;
  double base_latency = 0.0;
  double jitter = 0.0;
  double drop_prob = 0.0;
  double range = kUnlimitedRange;

  void validate() const;
};

/// Platform (publish/subscribe store) path: every element reaches the
/// platform, no loss by default.
ChannelConfig platform_default();
/// Roadside unit broadcast: < 200 ms latency, 1 km coverage.
ChannelConfig rsu_default();
/// Vehicle-to-vehicle OBU broadcast.
ChannelConfig v2v_default();

enum class PayloadType {
  kStateShare,
  kIntentShare,
  kDecisionProposal,
  kControlCommand,
  kSpat,
  kWarning,
  kTakeoverEvent,
  kTaskControl,
};

std::string to_string(PayloadType t);
PayloadType payload_from_string(const std::string& s);
std::string to_string(ChannelClass c);
ChannelClass channel_class_from_string(const std::string& s);

struct MessageEnvelope {
  std::string channel;
  std::string sender;
  std::uint64_t seq = 0;
  double send_ts = 0.0;   // sender clock: sim time + node offset
  double send_sim = 0.0;  // simulator clock
  double deliver_ts = 0.0;
  PayloadType type = PayloadType::kStateShare;
  nlohmann::json body;
  world::Vec2 origin;  // transmitter position at send time

  double latency() const { return deliver_ts - send_sim; }
};

enum class PublishResult { kQueued, kDropped };

class MessageBus {
 public:
  void add_channel(const ChannelConfig& cfg);
  const ChannelConfig& channel(const std::string& name) const;
  bool has_channel(const std::string& name) const { return channels_.count(name) != 0; }
  const std::map<std::string, ChannelConfig>& channels() const { return channels_; }

  /// Stamps seq and deliver_ts and queues the envelope, or drops it.
  /// Delivery never overtakes an earlier message of the same sender on the
  /// same channel; a later draw is held back instead.
  PublishResult publish(MessageEnvelope env, double now, const world::Pose& sender_pose, Rng& rng,
                        double sender_clock_offset = 0.0);

  /// Removes and returns every envelope with deliver_ts <= now, ordered by
  /// (deliver_ts, sender, seq).
  std::vector<MessageEnvelope> deliver_due(double now);

  std::size_t pending() const { return queue_.size(); }
  const std::vector<MessageEnvelope>& queue() const { return queue_; }

  nlohmann::json to_json() const;
  static MessageBus from_json(const nlohmann::json& j);

 private:
  using Key = std::pair<std::string, std::string>;  // (sender, channel)
  std::map<std::string, ChannelConfig> channels_;
  std::vector<MessageEnvelope> queue_;
  std::map<Key, std::uint64_t> seq_;
  std::map<Key, double> last_deliver_;
};

/// Entities that hear an envelope at delivery time. Broadcast reaches OBU
/// carriers within range of the transmitter; platform traffic goes to the
/// platform itself.
std::vector<std::string> receivers(const MessageEnvelope& env, const ChannelConfig& cfg,
                                   const world::WorldState& world);

struct LatencyStats {
  double mean = 0.0;
  double p99 = 0.0;
  double max = 0.0;
};

/// Nearest-rank p99 over deliver_ts - send_sim.
LatencyStats latency_stats(const std::vector<MessageEnvelope>& delivered);

void to_json(nlohmann::json& j, const MessageEnvelope& e);
void from_json(const nlohmann::json& j, MessageEnvelope& e);
void to_json(nlohmann::json& j, const ChannelConfig& c);
void from_json(const nlohmann::json& j, ChannelConfig& c);

}  // namespace vpat::bus
