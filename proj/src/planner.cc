#include "sdm/planner.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace sdm {
namespace {

int64_t ceil_div_positive(double num, double den) {
  if (den <= 0.0) throw std::invalid_argument("division by non-positive rate");
  return static_cast<int64_t>(std::ceil(num / den));
}

}  // namespace

void ModelSpec::validate() const {
  if (groups.empty()) throw std::invalid_argument("model has no tables");
  for (const auto& g : groups) {
    if (g.count <= 0 || g.pooling <= 0.0 || g.row_bytes <= 0.0) {
      throw std::invalid_argument("table group fields must be positive");
    }
  }
  if (batch_user <= 0.0 || batch_item <= 0.0 || comp_q <= 0.0) {
    throw std::invalid_argument("batch sizes and per-query compute must be positive");
  }
}

double ModelSpec::user_bytes_per_query() const {
  double sum = 0.0;
  for (const auto& g : groups) {
    if (!g.item) sum += g.count * g.pooling * g.row_bytes;
  }
  return batch_user * sum;
}

double ModelSpec::item_bytes_per_query() const {
  double sum = 0.0;
  for (const auto& g : groups) {
    if (g.item) sum += g.count * g.pooling * g.row_bytes;
  }
  return batch_item * sum;
}

double ModelSpec::sm_lookups_per_query() const {
  double sum = 0.0;
  for (const auto& g : groups) {
    if (g.on_sm) sum += g.count * g.pooling;
  }
  return sum;
}

void HwSpec::validate() const {
  if (bw_fast <= 0.0 || comp <= 0.0) {
    throw std::invalid_argument("hardware rates must be positive");
  }
}

BwReport bw_required(const ModelSpec& model, double qps) {
  model.validate();
  if (qps < 0.0) throw std::invalid_argument("qps must be non-negative");
  double unbatched = 0.0;
  for (const auto& g : model.groups) unbatched += g.count * g.pooling * g.row_bytes;
  BwReport r;
  r.bw_total = qps * unbatched;
  r.bw_user = qps * model.user_bytes_per_query();
  r.bw_item = qps * model.item_bytes_per_query();
  return r;
}

LatencyBudget latency_budget(const ModelSpec& model, const HwSpec& hw) {
  model.validate();
  if (hw.bw_fast <= 0.0) throw std::invalid_argument("fast-memory bandwidth must be positive");
  LatencyBudget b;
  const double user_q = model.user_bytes_per_query();
  const double item_q = model.item_bytes_per_query();
  if (item_q <= 0.0) {
    b.degenerate = true;
    b.slow_mem_bw_needed = std::numeric_limits<double>::infinity();
    b.exposed = false;
    return b;
  }
  // The item side occupies the fast path for item_q / bw_fast seconds per
  // query; the device must push user_q bytes within that window.
  b.slow_mem_bw_needed = user_q * hw.bw_fast / item_q;
  b.exposed = hw.bw_slow < b.slow_mem_bw_needed;
  return b;
}

double useful_slow_bw(const DeviceProfile& profile, double row_bytes) {
  if (row_bytes <= 0.0) throw std::invalid_argument("row_bytes must be positive");
  return profile.saturation_iops * row_bytes;
}

HostEstimate qps_latency_hosts(const ModelSpec& model, const HwSpec& hw, double total_qps) {
  model.validate();
  hw.validate();
  if (total_qps < 0.0) throw std::invalid_argument("total_qps must be non-negative");
  const double bw_q = model.user_bytes_per_query() + model.item_bytes_per_query();
  HostEstimate e;
  e.qps_host = std::min(hw.bw_fast / bw_q, hw.comp / model.comp_q);
  e.latency_rel = bw_q / hw.bw_fast + model.comp_q / hw.comp;
  e.hosts = total_qps == 0.0 ? 0 : ceil_div_positive(total_qps, e.qps_host);
  return e;
}

IopsReport iops_required(const ModelSpec& model, double qps, double hit_rate) {
  model.validate();
  if (qps < 0.0) throw std::invalid_argument("qps must be non-negative");
  if (hit_rate < 0.0 || hit_rate > 1.0) throw std::invalid_argument("hit_rate must be in [0,1]");
  IopsReport r;
  r.offered_iops = qps * model.sm_lookups_per_query();
  r.sustained_iops = r.offered_iops * (1.0 - hit_rate);
  return r;
}

int64_t ssds_needed(double sustained_iops, const DeviceProfile& profile) {
  if (sustained_iops < 0.0) throw std::invalid_argument("sustained_iops must be non-negative");
  if (sustained_iops == 0.0) return 0;
  return ceil_div_positive(sustained_iops, profile.saturation_iops);
}

std::vector<FleetRow> fleet_power(const FleetScenario& scenario) {
  if (scenario.options.empty()) throw std::invalid_argument("scenario has no host options");
  if (scenario.total_qps <= 0.0) throw std::invalid_argument("total_qps must be positive");
  for (const auto& o : scenario.options) {
    if (o.qps_per_host <= 0.0) throw std::invalid_argument("qps_per_host must be positive");
    if (o.utilization <= 0.0 || o.utilization > 1.0) {
      throw std::invalid_argument("utilization must be in (0,1]");
    }
  }
  const double util_base = scenario.options.front().utilization;
  std::vector<FleetRow> rows;
  rows.reserve(scenario.options.size());
  for (const auto& o : scenario.options) {
    FleetRow r;
    r.name = o.name;
    r.hosts = ceil_div_positive(scenario.total_qps, o.qps_per_host);
    r.aux_hosts = static_cast<int64_t>(std::ceil(static_cast<double>(r.hosts) * o.aux_host_ratio));
    r.power = static_cast<double>(r.hosts) * o.power_per_host +
              static_cast<double>(r.aux_hosts) * o.aux_host_power;
    r.fleet_power = r.power * (util_base / o.utilization);
    rows.push_back(r);
  }
  const double base = rows.front().fleet_power;
  for (auto& r : rows) {
    r.savings_pct = base > 0.0 ? 100.0 * (base - r.fleet_power) / base : 0.0;
  }
  return rows;
}

double warmup_overprovision(double restart_fraction, double warmup_minutes, double warm_qps_ratio,
                            double restart_interval_minutes) {
  if (restart_fraction < 0.0 || restart_fraction > 1.0) {
    throw std::invalid_argument("restart fraction must be in [0,1]");
  }
  if (warmup_minutes < 0.0) throw std::invalid_argument("warmup time must be non-negative");
  if (warm_qps_ratio <= 0.0 || warm_qps_ratio > 1.0) {
    throw std::invalid_argument("warmup qps ratio must be in (0,1]");
  }
  if (restart_interval_minutes <= 0.0) {
    throw std::invalid_argument("restart interval must be positive");
  }
  return (restart_fraction * warmup_minutes) / (warm_qps_ratio * restart_interval_minutes);
}

double update_interval(double model_size_gb, double sm_capacity_gb, double pdwpd) {
  return endurance_update_interval(model_size_gb, sm_capacity_gb, pdwpd);
}

ModelSpec model_preset(const std::string& name) {
  ModelSpec m;
  if (name == "m1") {
    m.groups = {
        {61, 42.0, 51.0, false, true},
        {30, 9.0, 69.0, true, false},
    };
    m.batch_item = 50.0;
  } else if (name == "m2") {
    m.groups = {
        {450, 25.0, 64.0, false, true},
        {280, 14.0, 38.0, true, false},
    };
    m.batch_item = 150.0;
  } else if (name == "m3") {
    m.groups = {
        {1800, 26.0, 192.0, false, true},
        {900, 26.0, 192.0, true, false},
    };
    m.batch_item = 1000.0;
  } else {
    throw std::invalid_argument("unknown model preset: " + name);
  }
  return m;
}

IopsCase iops_preset(const std::string& name) {
  IopsCase c;
  if (name == "m1") {
    // Device-resident slice of the user tables; the rest stay in fast memory.
    c.model.groups = {
        {50, 42.0, 51.0, false, true},
        {11, 42.0, 51.0, false, false},
        {30, 9.0, 69.0, true, false},
    };
    c.model.batch_item = 50.0;
    c.qps = 120.0;
    c.hit_rate = 0.96;
  } else if (name == "m2") {
    c.model.groups = {
        {450, 25.0, 64.0, false, true},
        {280, 14.0, 38.0, true, false},
    };
    c.model.batch_item = 150.0;
    c.qps = 450.0;
    c.hit_rate = 0.90;
  } else if (name == "m3") {
    c.model.groups = {
        {2000, 30.0, 512.0, false, true},
        {900, 26.0, 192.0, true, false},
    };
    c.model.batch_item = 1000.0;
    c.qps = 3150.0;
    c.hit_rate = 0.80;
  } else {
    throw std::invalid_argument("unknown iops preset: " + name);
  }
  return c;
}

FleetScenario fleet_preset(const std::string& name) {
  FleetScenario s;
  s.name = name;
  if (name == "t6") {
    s.total_qps = 288000.0;
    s.options = {
        {"baseline", 240.0, 1.0, 0.0, 0.0, 1.0},
        {"tiered", 120.0, 0.4, 0.0, 0.0, 1.0},
    };
  } else if (name == "t7") {
    s.total_qps = 675000.0;
    s.options = {
        {"scale-out", 450.0, 1.0, 0.2, 0.25, 1.0},
        {"tiered", 450.0, 1.0, 0.0, 0.0, 1.0},
    };
  } else if (name == "t9") {
    // Utilization study in relative units: one host serves the demand, power
    // is per-host power, only the utilization headroom differs.
    s.total_qps = 1.0;
    s.options = {
        {"baseline", 1.0, 1.0, 0.0, 0.0, 0.63},
        {"tiered", 1.0, 1.01, 0.0, 0.0, 0.90},
    };
  } else {
    throw std::invalid_argument("unknown fleet preset: " + name);
  }
  return s;
}

HwSpec hw_preset(const std::string& name) {
  HwSpec hw;
  if (name == "m2-host") {
    hw.bw_fast = 5e9;  // gather bandwidth of the fast-memory path
    hw.bw_slow = useful_slow_bw(DeviceProfile::optane_ssd(), 64.0);
    hw.comp = 1e9;
    hw.per_host_power = 1.0;
    hw.sm_iops_capacity = DeviceProfile::optane_ssd().saturation_iops;
    hw.sm_capacity_gb = 4000.0;
    hw.pdwpd = 5.0;
  } else {
    throw std::invalid_argument("unknown hardware preset: " + name);
  }
  return hw;
}

}  // namespace sdm
