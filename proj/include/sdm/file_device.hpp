#pragma once

#include <string>

#include "sdm/device.hpp"

namespace sdm {

// File-backed realism backend. Reads run at block granularity through
// unbuffered IO when the filesystem supports O_DIRECT, and latencies are
// measured wall-clock rather than simulated. Sub-block requests transfer
// whole blocks and discard the remainder, so there is no bus saving here.
class FileDevice : public BlockDevice {
 public:
  FileDevice(const std::string& path, uint64_t capacity, DeviceProfile profile, bool require_direct);
  ~FileDevice() override;

  FileDevice(const FileDevice&) = delete;
  FileDevice& operator=(const FileDevice&) = delete;

  uint64_t capacity_bytes() const override { return capacity_; }
  const DeviceProfile& profile() const override { return profile_; }
  bool direct_io() const { return direct_; }

  void write_region(uint64_t offset, std::span<const uint8_t> data) override;
  void read_region(uint64_t offset, std::span<uint8_t> out) const override;
  BatchResult read_batch(std::vector<IoRequest> requests, double submit_us) override;
  DeviceStats stats_snapshot() const override;

  static bool direct_io_supported(const std::string& dir);

 private:
  void read_blocks(uint64_t offset, uint32_t length, uint8_t* out) const;

  std::string path_;
  uint64_t capacity_ = 0;
  DeviceProfile profile_;
  int fd_ = -1;
  bool direct_ = false;
  mutable std::mutex mu_;
  DeviceStats stats_;
  mutable std::vector<uint8_t> block_buf_;
};

}  // namespace sdm
