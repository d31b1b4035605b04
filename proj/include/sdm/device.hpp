#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <queue>
#include <span>
#include <string>
#include <vector>

#include "sdm/rng.hpp"

namespace sdm {

// Calibration constraint: channels / base_latency_us must equal
// saturation_iops within 5%, so that the unloaded latency limit and the
// aggregate service rate describe the same device.
struct DeviceProfile {
  std::string name = "custom";
  double saturation_iops = 500000.0;  // IO/s at the benchmark access size
  double base_latency_us = 100.0;     // mean unloaded service latency
  uint32_t block_bytes = 4096;        // 512 or 4096
  bool supports_subblock = false;
  double link_bytes_per_us = 3200.0;
  double pdwpd = 5.0;                 // sustainable drive writes per day
  uint32_t max_outstanding = 0;       // admitted-and-incomplete cap; 0 = unlimited
  uint32_t channels = 50;
  double service_sigma = 0.35;        // lognormal sigma of service times
  double subblock_latency_factor = 0.96;  // service reduction for sub-block reads
  double write_service_factor = 2.5;

  double mean_service_us() const { return base_latency_us; }
  void validate() const;  // throws std::invalid_argument
  static DeviceProfile nand_flash();
  static DeviceProfile optane_ssd();
  static DeviceProfile by_name(const std::string& name);  // "nand" | "optane"
};

struct IoRequest {
  int32_t table_id = -1;
  uint64_t byte_offset = 0;
  uint32_t length = 0;
  bool subblock = false;  // transfer only the dword-aligned extent of the range
};

struct IoCompletion {
  IoRequest request;
  std::vector<uint8_t> data;  // stored bytes at [offset, offset+length); empty on error
  double submit_us = 0.0;
  double admit_us = 0.0;    // when the device accepted it past the caps
  double complete_us = 0.0;
  // Device-side latency, admit to complete: queue wait + service + transfer.
  // Time spent deferred by a cap is visible as admit_us - submit_us.
  double latency_us = 0.0;
  uint64_t bytes_transferred = 0;
  bool ok = true;
  std::string error;
};

struct LatencyDigest {
  uint64_t count = 0;
  double mean = 0, p50 = 0, p95 = 0, p99 = 0, max = 0;
};

LatencyDigest digest_of(std::vector<double> samples);

struct DeviceStats {
  uint64_t reads = 0;
  uint64_t writes = 0;
  uint64_t bytes_requested = 0;    // sum of request lengths
  uint64_t bytes_transferred = 0;  // after block/sub-block amplification
  uint64_t bytes_written = 0;
  uint64_t rejected_for_queue_full = 0;  // deferred on submit, served later; nothing dropped
  uint64_t error_completions = 0;
  double first_submit_us = 0.0;
  double last_complete_us = 0.0;
  std::vector<double> read_latencies_us;
  std::map<int32_t, uint32_t> peak_in_service_per_table;

  LatencyDigest latency_digest() const { return digest_of(read_latencies_us); }
  double offered_read_iops() const;
  double read_amplification() const {
    return bytes_requested ? static_cast<double>(bytes_transferred) / static_cast<double>(bytes_requested) : 0.0;
  }
};

// Both limits must be positive; unlimited is the unconfigured default.
struct ThrottleConfig {
  uint32_t max_outstanding_per_table = 0;
  uint32_t max_tables_in_flight = 0;
};

class ReadHandle;

class BlockDevice {
 public:
  virtual ~BlockDevice() = default;

  struct BatchResult {
    std::vector<IoCompletion> completions;  // in completion order
    double submit_us = 0.0;
    double end_us = 0.0;  // last completion
    uint32_t deferred = 0;
    double makespan_us() const { return end_us - submit_us; }
  };

  virtual uint64_t capacity_bytes() const = 0;
  virtual void write_region(uint64_t offset, std::span<const uint8_t> data) = 0;
  virtual void read_region(uint64_t offset, std::span<uint8_t> out) const = 0;  // untimed, maintenance only
  virtual BatchResult read_batch(std::vector<IoRequest> requests, double submit_us) = 0;
  virtual const DeviceProfile& profile() const = 0;
  virtual DeviceStats stats_snapshot() const = 0;
};

// Event-driven model of a storage-class-memory block device. Virtual time
// only; nothing sleeps. Requests are admitted against the throttle caps,
// assigned to the least-busy channel, and served FIFO per channel with
// seeded lognormal service times. Completion latency is queue wait plus
// service plus transfer (bytes / link rate). Requests blocked by a cap are
// deferred in submission order and admitted as completions free slots.
//
// Determinism: identical seed and submission schedule give identical
// completion order and latencies. Service times are drawn at submission so
// that mode changes downstream (which reorder admissions, not submissions)
// keep per-request draws stable.
class SimDevice : public BlockDevice {
 public:
  SimDevice(DeviceProfile profile, uint64_t capacity, uint64_t seed);

  uint64_t capacity_bytes() const override { return storage_.size(); }
  const DeviceProfile& profile() const override { return profile_; }

  // Load-time path: applied immediately, no latency event.
  void write_region(uint64_t offset, std::span<const uint8_t> data) override;
  void read_region(uint64_t offset, std::span<uint8_t> out) const override;

  std::shared_ptr<ReadHandle> submit_reads(std::vector<IoRequest> requests, double submit_us);
  double wait_all(ReadHandle& handle);  // advances virtual time; returns last completion
  std::vector<IoCompletion> take_completions(ReadHandle& handle, double up_to_us);

  BatchResult read_batch(std::vector<IoRequest> requests, double submit_us) override;

  // Timed write competing with reads for channels. Data becomes visible at
  // submission; the event models timing only.
  void submit_write(uint64_t offset, std::span<const uint8_t> data, double submit_us);

  void drain();  // run every queued event

  void set_throttle(const ThrottleConfig& cfg);  // throws on non-positive limits
  void clear_throttle();

  DeviceStats stats_snapshot() const override;
  void reset_latency_samples();
  double virtual_now_us() const;

 private:
  struct Pending {
    IoRequest req;
    uint64_t seq = 0;
    double submit_us = 0.0;
    double admit_us = 0.0;
    double service_us = 0.0;  // drawn at submission
    uint64_t transfer_bytes = 0;
    bool is_write = false;
    std::shared_ptr<ReadHandle> owner;
  };

  struct Event {
    double time = 0.0;
    uint64_t seq = 0;
    bool operator>(const Event& other) const {
      return time != other.time ? time > other.time : seq > other.seq;
    }
  };

  void advance_to(double t);
  bool caps_allow(int32_t table_id) const;
  void admit(Pending&& p, double at_us);
  void admit_deferred(double at_us);
  void complete(const Event& ev);
  uint64_t transfer_extent(const IoRequest& r) const;
  void enqueue(Pending&& p, double submit_us);

  DeviceProfile profile_;
  std::vector<uint8_t> storage_;
  SplitMix64 rng_;
  mutable std::mutex mu_;

  std::vector<double> channel_busy_us_;
  std::priority_queue<Event, std::vector<Event>, std::greater<Event>> events_;
  std::map<uint64_t, Pending> in_service_;
  std::deque<Pending> deferred_;
  uint64_t next_seq_ = 1;
  double watermark_us_ = 0.0;

  ThrottleConfig throttle_;
  uint32_t in_flight_total_ = 0;
  std::map<int32_t, uint32_t> in_flight_per_table_;

  bool any_timed_submit_ = false;
  DeviceStats stats_;
};

class ReadHandle {
 public:
  size_t expected() const { return expected_; }
  size_t completed() const { return done_.size(); }
  bool done() const { return done_.size() == expected_; }
  uint32_t deferred_on_submit() const { return deferred_on_submit_; }
  std::vector<IoCompletion>& completions() { return done_; }

 private:
  friend class SimDevice;
  std::vector<IoCompletion> done_;  // completion order
  size_t expected_ = 0;
  uint32_t deferred_on_submit_ = 0;
  double submit_us_ = 0.0;
  double last_complete_us_ = 0.0;
};

// Days between full-model rewrites that a drive sustains at its rated
// endurance: 365 * model_size / (pdwpd * capacity), dimensionless inputs in
// the same unit.
double endurance_update_interval(double model_size_gb, double sm_capacity_gb, double pdwpd);

// Open-loop load driver: arrivals with exponential gaps at the offered rate,
// one read per arrival at a random aligned offset. Used for latency curves.
struct OpenLoopSpec {
  double offered_iops = 0.0;
  uint32_t num_ios = 20000;
  uint32_t io_bytes = 4096;
  bool subblock = false;
  uint64_t region_bytes = 64ull << 20;
  uint64_t seed = 1;
  double write_fraction = 0.0;  // interleave timed writes at this probability
};

struct OpenLoopResult {
  LatencyDigest digest;
  DeviceStats stats;
  double offered_iops = 0.0;
};

OpenLoopResult run_open_loop(const DeviceProfile& profile, const OpenLoopSpec& spec);

}  // namespace sdm
