#include "sdm/device.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>

namespace sdm {

void DeviceProfile::validate() const {
  if (saturation_iops <= 0) throw std::invalid_argument("profile " + name + ": saturation_iops must be positive");
  if (base_latency_us <= 0) throw std::invalid_argument("profile " + name + ": base_latency_us must be positive");
  if (block_bytes != 512 && block_bytes != 4096)
    throw std::invalid_argument("profile " + name + ": block_bytes must be 512 or 4096");
  if (link_bytes_per_us <= 0) throw std::invalid_argument("profile " + name + ": link_bytes_per_us must be positive");
  if (channels == 0) throw std::invalid_argument("profile " + name + ": channels must be positive");
  if (service_sigma < 0) throw std::invalid_argument("profile " + name + ": service_sigma must be non-negative");
  // Little's law at saturation: concurrency = rate * mean latency.
  double implied_iops = static_cast<double>(channels) / base_latency_us * 1e6;
  double err = std::abs(implied_iops - saturation_iops) / saturation_iops;
  if (err > 0.05)
    throw std::invalid_argument("profile " + name + ": channels/base_latency disagrees with saturation_iops by more than 5%");
}

DeviceProfile DeviceProfile::nand_flash() {
  DeviceProfile p;
  p.name = "nand";
  p.saturation_iops = 500000.0;
  p.base_latency_us = 100.0;
  p.block_bytes = 4096;
  p.supports_subblock = false;
  p.link_bytes_per_us = 3200.0;
  p.pdwpd = 5.0;
  p.max_outstanding = 0;
  p.channels = 50;
  p.service_sigma = 0.35;
  p.write_service_factor = 2.5;
  return p;
}

DeviceProfile DeviceProfile::optane_ssd() {
  DeviceProfile p;
  p.name = "optane";
  p.saturation_iops = 4000000.0;
  p.base_latency_us = 10.0;
  p.block_bytes = 512;
  p.supports_subblock = true;
  p.link_bytes_per_us = 3200.0;
  p.pdwpd = 60.0;
  p.max_outstanding = 0;
  p.channels = 40;
  p.service_sigma = 0.1;
  p.write_service_factor = 1.2;
  return p;
}

DeviceProfile DeviceProfile::by_name(const std::string& name) {
  if (name == "nand") return nand_flash();
  if (name == "optane") return optane_ssd();
  throw std::invalid_argument("unknown device profile: " + name);
}

LatencyDigest digest_of(std::vector<double> samples) {
  LatencyDigest d;
  d.count = samples.size();
  if (samples.empty()) return d;
  std::sort(samples.begin(), samples.end());
  double sum = 0;
  for (double v : samples) sum += v;
  d.mean = sum / static_cast<double>(samples.size());
  auto at = [&](double q) {
    size_t idx = static_cast<size_t>(q * static_cast<double>(samples.size() - 1));
    return samples[idx];
  };
  d.p50 = at(0.50);
  d.p95 = at(0.95);
  d.p99 = at(0.99);
  d.max = samples.back();
  return d;
}

double DeviceStats::offered_read_iops() const {
  double span_us = last_complete_us - first_submit_us;
  if (reads == 0 || span_us <= 0) return 0.0;
  return static_cast<double>(reads) / span_us * 1e6;
}

SimDevice::SimDevice(DeviceProfile profile, uint64_t capacity, uint64_t seed)
    : profile_(std::move(profile)),
      storage_(capacity, 0),
      rng_(derive_seed(seed, 0xd0c1ce)) {
  profile_.validate();
  channel_busy_us_.assign(profile_.channels, 0.0);
}

void SimDevice::write_region(uint64_t offset, std::span<const uint8_t> data) {
  std::lock_guard<std::mutex> lock(mu_);
  if (offset + data.size() > storage_.size())
    throw std::out_of_range("write_region beyond device capacity");
  std::memcpy(storage_.data() + offset, data.data(), data.size());
  stats_.writes += 1;
  stats_.bytes_written += data.size();
}

void SimDevice::read_region(uint64_t offset, std::span<uint8_t> out) const {
  std::lock_guard<std::mutex> lock(mu_);
  if (offset + out.size() > storage_.size())
    throw std::out_of_range("read_region beyond device capacity");
  std::memcpy(out.data(), storage_.data() + offset, out.size());
}

uint64_t SimDevice::transfer_extent(const IoRequest& r) const {
  uint64_t end = r.byte_offset + r.length;
  if (r.subblock && profile_.supports_subblock) {
    uint64_t lo = r.byte_offset & ~3ull;
    uint64_t hi = (end + 3ull) & ~3ull;
    return hi - lo;
  }
  uint64_t bs = profile_.block_bytes;
  uint64_t first = r.byte_offset / bs;
  uint64_t last = (end - 1) / bs;
  return (last - first + 1) * bs;
}

bool SimDevice::caps_allow(int32_t table_id) const {
  if (profile_.max_outstanding && in_flight_total_ >= profile_.max_outstanding) return false;
  if (throttle_.max_outstanding_per_table) {
    auto it = in_flight_per_table_.find(table_id);
    if (it != in_flight_per_table_.end() && it->second >= throttle_.max_outstanding_per_table) return false;
  }
  if (throttle_.max_tables_in_flight) {
    // Zero entries are erased on completion, so size() is the active table count.
    bool already = in_flight_per_table_.count(table_id) > 0;
    if (!already && in_flight_per_table_.size() >= throttle_.max_tables_in_flight) return false;
  }
  return true;
}

void SimDevice::admit(Pending&& p, double at_us) {
  in_flight_total_ += 1;
  uint32_t& per_table = in_flight_per_table_[p.req.table_id];
  per_table += 1;
  uint32_t& peak = stats_.peak_in_service_per_table[p.req.table_id];
  peak = std::max(peak, per_table);

  auto ch = std::min_element(channel_busy_us_.begin(), channel_busy_us_.end());
  double start = std::max(at_us, *ch);

  p.admit_us = at_us;
  double transfer = static_cast<double>(p.transfer_bytes) / profile_.link_bytes_per_us;
  double done = start + p.service_us + transfer;
  *ch = start + p.service_us;  // the link, not the channel, absorbs transfer time

  events_.push(Event{done, p.seq});
  in_service_.emplace(p.seq, std::move(p));
}

void SimDevice::admit_deferred(double at_us) {
  for (auto it = deferred_.begin(); it != deferred_.end();) {
    if (caps_allow(it->req.table_id)) {
      Pending p = std::move(*it);
      it = deferred_.erase(it);
      admit(std::move(p), at_us);
    } else {
      ++it;
    }
  }
}

void SimDevice::complete(const Event& ev) {
  auto node = in_service_.extract(ev.seq);
  if (node.empty()) return;
  Pending& p = node.mapped();

  watermark_us_ = ev.time;
  in_flight_total_ -= 1;
  auto pt = in_flight_per_table_.find(p.req.table_id);
  if (pt != in_flight_per_table_.end() && --pt->second == 0) in_flight_per_table_.erase(pt);

  if (!p.is_write) {
    IoCompletion c;
    c.request = p.req;
    c.submit_us = p.submit_us;
    c.admit_us = p.admit_us;
    c.complete_us = ev.time;
    c.latency_us = ev.time - p.admit_us;
    c.bytes_transferred = p.transfer_bytes;
    c.data.resize(p.req.length);
    std::memcpy(c.data.data(), storage_.data() + p.req.byte_offset, p.req.length);
    stats_.read_latencies_us.push_back(c.latency_us);
    stats_.last_complete_us = std::max(stats_.last_complete_us, ev.time);
    if (p.owner) {
      p.owner->last_complete_us_ = std::max(p.owner->last_complete_us_, ev.time);
      p.owner->done_.push_back(std::move(c));
    }
  } else {
    stats_.last_complete_us = std::max(stats_.last_complete_us, ev.time);
  }

  admit_deferred(ev.time);
}

void SimDevice::advance_to(double t) {
  while (!events_.empty() && events_.top().time <= t) {
    Event ev = events_.top();
    events_.pop();
    complete(ev);
  }
  watermark_us_ = std::max(watermark_us_, t);
}

void SimDevice::enqueue(Pending&& p, double submit_us) {
  if (!any_timed_submit_ || submit_us < stats_.first_submit_us) stats_.first_submit_us = submit_us;
  any_timed_submit_ = true;
  if (!p.is_write) {
    stats_.reads += 1;
    stats_.bytes_requested += p.req.length;
    stats_.bytes_transferred += p.transfer_bytes;
  } else {
    stats_.writes += 1;
    stats_.bytes_written += p.req.length;
  }
  double at = std::max(submit_us, watermark_us_);
  if (caps_allow(p.req.table_id)) {
    admit(std::move(p), at);
  } else {
    stats_.rejected_for_queue_full += 1;
    if (p.owner) p.owner->deferred_on_submit_ += 1;
    deferred_.push_back(std::move(p));
  }
}

std::shared_ptr<ReadHandle> SimDevice::submit_reads(std::vector<IoRequest> requests, double submit_us) {
  std::lock_guard<std::mutex> lock(mu_);
  auto handle = std::make_shared<ReadHandle>();
  handle->expected_ = requests.size();
  handle->submit_us_ = submit_us;
  handle->last_complete_us_ = submit_us;
  advance_to(submit_us);
  for (IoRequest& r : requests) {
    if (r.length == 0) throw std::invalid_argument("zero-length read");
    if (r.byte_offset + r.length > storage_.size()) {
      IoCompletion c;
      c.request = r;
      c.submit_us = submit_us;
      c.admit_us = submit_us;
      c.complete_us = submit_us;
      c.ok = false;
      c.error = "read beyond device capacity";
      stats_.error_completions += 1;
      handle->done_.push_back(std::move(c));
      continue;
    }
    Pending p;
    p.req = r;
    p.req.subblock = r.subblock && profile_.supports_subblock;
    p.seq = next_seq_++;
    p.submit_us = submit_us;
    p.service_us = rng_.lognormal_mean(profile_.mean_service_us(), profile_.service_sigma);
    if (p.req.subblock) p.service_us *= profile_.subblock_latency_factor;
    p.transfer_bytes = transfer_extent(p.req);
    p.owner = handle;
    enqueue(std::move(p), submit_us);
  }
  return handle;
}

double SimDevice::wait_all(ReadHandle& handle) {
  std::lock_guard<std::mutex> lock(mu_);
  while (!handle.done()) {
    if (events_.empty()) throw std::logic_error("device stalled with incomplete handle");
    Event ev = events_.top();
    events_.pop();
    complete(ev);
  }
  return handle.last_complete_us_;
}

std::vector<IoCompletion> SimDevice::take_completions(ReadHandle& handle, double up_to_us) {
  std::lock_guard<std::mutex> lock(mu_);
  advance_to(up_to_us);
  std::vector<IoCompletion> out;
  out.swap(handle.done_);
  handle.expected_ -= out.size();
  return out;
}

SimDevice::BatchResult SimDevice::read_batch(std::vector<IoRequest> requests, double submit_us) {
  auto handle = submit_reads(std::move(requests), submit_us);
  double end = wait_all(*handle);
  BatchResult r;
  r.completions = std::move(handle->completions());
  r.submit_us = submit_us;
  r.end_us = end;
  r.deferred = handle->deferred_on_submit();
  return r;
}

void SimDevice::submit_write(uint64_t offset, std::span<const uint8_t> data, double submit_us) {
  std::lock_guard<std::mutex> lock(mu_);
  if (offset + data.size() > storage_.size())
    throw std::out_of_range("write beyond device capacity");
  advance_to(submit_us);
  std::memcpy(storage_.data() + offset, data.data(), data.size());
  Pending p;
  p.req.table_id = -1;
  p.req.byte_offset = offset;
  p.req.length = static_cast<uint32_t>(data.size());
  p.seq = next_seq_++;
  p.submit_us = submit_us;
  p.service_us = rng_.lognormal_mean(profile_.mean_service_us(), profile_.service_sigma) * profile_.write_service_factor;
  p.transfer_bytes = transfer_extent(p.req);
  p.is_write = true;
  enqueue(std::move(p), submit_us);
}

void SimDevice::drain() {
  std::lock_guard<std::mutex> lock(mu_);
  while (!events_.empty()) {
    Event ev = events_.top();
    events_.pop();
    complete(ev);
  }
}

void SimDevice::set_throttle(const ThrottleConfig& cfg) {
  if (cfg.max_outstanding_per_table == 0 || cfg.max_tables_in_flight == 0)
    throw std::invalid_argument("throttle limits must be positive");
  std::lock_guard<std::mutex> lock(mu_);
  throttle_ = cfg;
}

void SimDevice::clear_throttle() {
  std::lock_guard<std::mutex> lock(mu_);
  throttle_ = ThrottleConfig{};
}

DeviceStats SimDevice::stats_snapshot() const {
  std::lock_guard<std::mutex> lock(mu_);
  return stats_;
}

void SimDevice::reset_latency_samples() {
  std::lock_guard<std::mutex> lock(mu_);
  stats_.read_latencies_us.clear();
}

double SimDevice::virtual_now_us() const {
  std::lock_guard<std::mutex> lock(mu_);
  return watermark_us_;
}

double endurance_update_interval(double model_size_gb, double sm_capacity_gb, double pdwpd) {
  if (model_size_gb <= 0) throw std::invalid_argument("model size must be positive");
  if (sm_capacity_gb <= 0) throw std::invalid_argument("capacity must be positive");
  if (pdwpd <= 0) throw std::invalid_argument("pdwpd must be positive");
  return 365.0 * model_size_gb / (pdwpd * sm_capacity_gb);
}

OpenLoopResult run_open_loop(const DeviceProfile& profile, const OpenLoopSpec& spec) {
  if (spec.offered_iops <= 0) throw std::invalid_argument("offered_iops must be positive");
  SimDevice dev(profile, spec.region_bytes, spec.seed);

  // Arrival gaps reuse one uniform stream so that sweeping the rate with a
  // fixed seed scales the same schedule; queueing then grows monotonically
  // with offered load point by point.
  SplitMix64 arrivals(derive_seed(spec.seed, 0xa221a1));
  double mean_gap_us = 1e6 / spec.offered_iops;
  uint64_t slots = spec.region_bytes / spec.io_bytes;
  double t = 0.0;
  std::vector<std::shared_ptr<ReadHandle>> handles;
  handles.reserve(spec.num_ios);
  for (uint32_t i = 0; i < spec.num_ios; ++i) {
    t += arrivals.exponential(mean_gap_us);
    uint64_t offset = arrivals.next_below(slots) * spec.io_bytes;
    if (spec.write_fraction > 0 && arrivals.next_double() < spec.write_fraction) {
      std::vector<uint8_t> junk(spec.io_bytes, static_cast<uint8_t>(i));
      dev.submit_write(offset, junk, t);
      continue;
    }
    IoRequest r;
    r.table_id = 0;
    r.byte_offset = offset;
    r.length = spec.io_bytes;
    r.subblock = spec.subblock;
    handles.push_back(dev.submit_reads({r}, t));
  }
  dev.drain();

  OpenLoopResult out;
  out.stats = dev.stats_snapshot();
  out.digest = out.stats.latency_digest();
  out.offered_iops = spec.offered_iops;
  return out;
}

}  // namespace sdm
