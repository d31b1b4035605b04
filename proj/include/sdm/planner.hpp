#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sdm/device.hpp"

namespace sdm {

// Closed-form capacity arithmetic. Everything here is a pure function over
// small structs; nothing touches the serving engine. Outputs derived from the
// proportionality relations are in relative units (constants fixed to 1), so
// ratios and comparisons are meaningful while absolutes are not.

struct TableGroup {
  int32_t count = 1;          // identical tables in this group
  double pooling = 1.0;       // rows gathered per lookup
  double row_bytes = 0.0;
  bool item = false;          // item-side tables batch by B_I
  bool on_sm = false;         // resident on the slow device (IOPS-relevant)
};

struct ModelSpec {
  std::vector<TableGroup> groups;
  double batch_user = 1.0;  // B_U
  double batch_item = 1.0;  // B_I
  double comp_q = 1.0;      // abstract compute units per query

  void validate() const;  // throws std::invalid_argument
  double user_bytes_per_query() const;  // B_U * sum over user tables of p*d
  double item_bytes_per_query() const;  // B_I * sum over item tables of p*d
  double sm_lookups_per_query() const;  // sum of pooling over device-resident tables
};

struct HwSpec {
  double bw_fast = 0.0;        // bytes/s the fast-memory path can gather
  double bw_slow = 0.0;        // bytes/s usefully deliverable from the device
  double comp = 0.0;           // compute units/s
  double per_host_power = 1.0; // normalized
  double sm_iops_capacity = 0.0;
  double sm_capacity_gb = 0.0;
  double pdwpd = 0.0;

  void validate() const;
};

struct BwReport {
  double bw_total = 0.0;  // qps * sum p*d over every table, batches ignored
  double bw_user = 0.0;   // qps * B_U * user sum
  double bw_item = 0.0;   // qps * B_I * item sum
};
BwReport bw_required(const ModelSpec& model, double qps);

// Slow-memory bandwidth that keeps the device path inside the time budget the
// item side leaves: needed = user_bytes_q * bw_fast / item_bytes_q. With no
// item-side traffic the budget is unbounded and nothing is exposed.
struct LatencyBudget {
  double slow_mem_bw_needed = 0.0;
  bool exposed = false;    // hw.bw_slow falls short of the need
  bool degenerate = false; // no item traffic to hide behind
};
LatencyBudget latency_budget(const ModelSpec& model, const HwSpec& hw);

// Bytes/s a device can usefully deliver when every read returns one row.
double useful_slow_bw(const DeviceProfile& profile, double row_bytes);

struct HostEstimate {
  double qps_host = 0.0;     // min(bw/bw_q, comp/comp_q), relative units
  double latency_rel = 0.0;  // bw_q/bw + comp_q/comp, relative units
  int64_t hosts = 0;         // ceil(total_qps / qps_host)
};
HostEstimate qps_latency_hosts(const ModelSpec& model, const HwSpec& hw, double total_qps);

struct IopsReport {
  double offered_iops = 0.0;    // qps * sum of pooling over device-resident tables
  double sustained_iops = 0.0;  // offered * (1 - hit_rate)
};
IopsReport iops_required(const ModelSpec& model, double qps, double hit_rate);
int64_t ssds_needed(double sustained_iops, const DeviceProfile& profile);

struct HostOption {
  std::string name;
  double qps_per_host = 0.0;
  double power_per_host = 1.0;
  double aux_host_ratio = 0.0;  // extra hosts per serving host for scale-out
  double aux_host_power = 0.0;
  double utilization = 1.0;     // achievable fleet utilization with this option
};

struct FleetScenario {
  std::string name;
  double total_qps = 0.0;
  std::vector<HostOption> options;  // first option is the baseline
};

struct FleetRow {
  std::string name;
  int64_t hosts = 0;
  int64_t aux_hosts = 0;
  double power = 0.0;        // hosts*php + aux_hosts*aux_power
  double fleet_power = 0.0;  // power scaled by util_baseline/util
  double savings_pct = 0.0;  // vs the baseline option's fleet power
};
// Lower utilization means more provisioned hosts for the same demand; the
// baseline option's utilization anchors the comparison.
std::vector<FleetRow> fleet_power(const FleetScenario& scenario);

// Extra serving capacity fraction to carry while restarted hosts re-warm:
// (restart_fraction * warmup_minutes) / (qps_ratio * interval_minutes).
double warmup_overprovision(double restart_fraction, double warmup_minutes, double warm_qps_ratio,
                            double restart_interval_minutes);

// Days between full-model rewrites at rated endurance; same unit for sizes.
double update_interval(double model_size_gb, double sm_capacity_gb, double pdwpd);

// Named inputs used by the report tooling and golden tests.
ModelSpec model_preset(const std::string& name);  // m1, m2, m3
struct IopsCase {
  ModelSpec model;
  double qps = 0.0;
  double hit_rate = 0.0;
};
IopsCase iops_preset(const std::string& name);     // m1, m2, m3
FleetScenario fleet_preset(const std::string& name);  // t6, t7, t9
HwSpec hw_preset(const std::string& name);         // m2-host

}  // namespace sdm
