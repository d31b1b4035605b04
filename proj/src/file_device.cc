#include "sdm/file_device.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <chrono>
#include <cstdlib>
#include <cstring>
#include <stdexcept>

namespace sdm {

namespace {

constexpr size_t kDirectAlign = 4096;

double now_us() {
  auto t = std::chrono::steady_clock::now().time_since_epoch();
  return std::chrono::duration<double, std::micro>(t).count();
}

uint8_t* aligned_buffer(std::vector<uint8_t>& backing, size_t bytes) {
  backing.resize(bytes + kDirectAlign);
  auto addr = reinterpret_cast<uintptr_t>(backing.data());
  uintptr_t aligned = (addr + kDirectAlign - 1) & ~(kDirectAlign - 1);
  return reinterpret_cast<uint8_t*>(aligned);
}

}  // namespace

FileDevice::FileDevice(const std::string& path, uint64_t capacity, DeviceProfile profile, bool require_direct)
    : path_(path), capacity_(capacity), profile_(std::move(profile)) {
  profile_.validate();
  fd_ = ::open(path.c_str(), O_RDWR | O_CREAT | O_DIRECT, 0644);
  if (fd_ >= 0) {
    direct_ = true;
  } else {
    if (require_direct) throw std::runtime_error("O_DIRECT unavailable for " + path);
    fd_ = ::open(path.c_str(), O_RDWR | O_CREAT, 0644);
    if (fd_ < 0) throw std::runtime_error("cannot open " + path);
  }
  if (::ftruncate(fd_, static_cast<off_t>(capacity)) != 0) {
    ::close(fd_);
    throw std::runtime_error("cannot size " + path);
  }
}

FileDevice::~FileDevice() {
  if (fd_ >= 0) ::close(fd_);
}

bool FileDevice::direct_io_supported(const std::string& dir) {
  std::string probe = dir + "/.directio_probe";
  int fd = ::open(probe.c_str(), O_RDWR | O_CREAT | O_DIRECT, 0644);
  if (fd < 0) return false;
  ::close(fd);
  ::unlink(probe.c_str());
  return true;
}

void FileDevice::write_region(uint64_t offset, std::span<const uint8_t> data) {
  std::lock_guard<std::mutex> lock(mu_);
  if (offset + data.size() > capacity_) throw std::out_of_range("write beyond device capacity");

  // Read-modify-write at block granularity keeps the fd usable under O_DIRECT.
  uint64_t bs = profile_.block_bytes;
  uint64_t first = offset / bs;
  uint64_t last = (offset + data.size() - 1) / bs;
  size_t span_bytes = static_cast<size_t>((last - first + 1) * bs);
  std::vector<uint8_t> backing;
  uint8_t* buf = aligned_buffer(backing, span_bytes);
  ssize_t got = ::pread(fd_, buf, span_bytes, static_cast<off_t>(first * bs));
  if (got < 0) throw std::runtime_error("pread failed on " + path_);
  if (static_cast<size_t>(got) < span_bytes) std::memset(buf + got, 0, span_bytes - got);
  std::memcpy(buf + (offset - first * bs), data.data(), data.size());
  if (::pwrite(fd_, buf, span_bytes, static_cast<off_t>(first * bs)) != static_cast<ssize_t>(span_bytes))
    throw std::runtime_error("pwrite failed on " + path_);
  stats_.writes += 1;
  stats_.bytes_written += data.size();
}

void FileDevice::read_blocks(uint64_t offset, uint32_t length, uint8_t* out) const {
  uint64_t bs = profile_.block_bytes;
  uint64_t first = offset / bs;
  uint64_t last = (offset + length - 1) / bs;
  size_t span_bytes = static_cast<size_t>((last - first + 1) * bs);
  std::vector<uint8_t> backing;
  uint8_t* buf = aligned_buffer(backing, span_bytes);
  ssize_t got = ::pread(fd_, buf, span_bytes, static_cast<off_t>(first * bs));
  if (got < 0) throw std::runtime_error("pread failed on " + path_);
  if (static_cast<size_t>(got) < span_bytes) std::memset(buf + got, 0, span_bytes - got);
  std::memcpy(out, buf + (offset - first * bs), length);
}

void FileDevice::read_region(uint64_t offset, std::span<uint8_t> out) const {
  std::lock_guard<std::mutex> lock(mu_);
  if (offset + out.size() > capacity_) throw std::out_of_range("read beyond device capacity");
  read_blocks(offset, static_cast<uint32_t>(out.size()), out.data());
}

FileDevice::BatchResult FileDevice::read_batch(std::vector<IoRequest> requests, double submit_us) {
  std::lock_guard<std::mutex> lock(mu_);
  BatchResult result;
  result.submit_us = submit_us;
  double t0 = now_us();
  for (const IoRequest& r : requests) {
    IoCompletion c;
    c.request = r;
    c.submit_us = submit_us;
    if (r.length == 0 || r.byte_offset + r.length > capacity_) {
      c.ok = false;
      c.error = "read beyond device capacity";
      stats_.error_completions += 1;
      result.completions.push_back(std::move(c));
      continue;
    }
    double s = now_us();
    c.data.resize(r.length);
    read_blocks(r.byte_offset, r.length, c.data.data());
    double e = now_us();
    uint64_t bs = profile_.block_bytes;
    uint64_t blocks = (r.byte_offset + r.length - 1) / bs - r.byte_offset / bs + 1;
    c.bytes_transferred = blocks * bs;
    c.latency_us = e - s;
    c.complete_us = submit_us + (e - t0);
    stats_.reads += 1;
    stats_.bytes_requested += r.length;
    stats_.bytes_transferred += c.bytes_transferred;
    stats_.read_latencies_us.push_back(c.latency_us);
    result.completions.push_back(std::move(c));
  }
  result.end_us = submit_us + (now_us() - t0);
  return result;
}

DeviceStats FileDevice::stats_snapshot() const {
  std::lock_guard<std::mutex> lock(mu_);
  return stats_;
}

}  // namespace sdm
