#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "alba/backbone.hpp"

namespace alba {

struct MemoryReport {
  std::size_t backbone_bytes = 0;
  std::map<std::string, std::size_t> pack_bytes;
  std::size_t total_bytes = 0;
  double ratio_vs_backbone = 1.0;
};

// Parameter-count-based accounting (4 bytes per f32 parameter) for the
// shared-backbone cost model: n_packs speakers over one backbone.
MemoryReport analytic_memory_report(std::size_t n_packs, std::size_t d, std::size_t r,
                                    std::size_t n_sites, std::size_t d_spk,
                                    std::size_t backbone_total);

// Multi-tenant pack registry over one immutable backbone. Pack loads and
// evictions are serialized; synthesis runs concurrently on shared snapshots.
// A pack being synthesized from survives eviction until the request finishes
// (shared ownership), so requests never observe a half-unloaded pack.
class Registry {
 public:
  Registry(std::shared_ptr<Backbone> backbone, std::size_t capacity);

  // Loads a pack file, evicting the least-recently-used resident if at
  // capacity. Returns the pack's speaker label.
  std::string load(const std::string& path);
  void unload(const std::string& label);

  struct SynthResult {
    std::size_t n_frames = 0;
    std::size_t n_mel_bins = 0;
    std::vector<float> mel;
  };
  SynthResult synth(const std::string& label, const std::vector<std::uint32_t>& tokens);

  struct Stats {
    std::size_t residents = 0;
    std::uint64_t loads = 0;
    std::uint64_t evictions = 0;
    std::uint64_t syntheses = 0;
    std::size_t backbone_bytes = 0;
    std::size_t total_bytes = 0;
  };
  Stats stats() const;
  MemoryReport memory_report() const;

  std::uint64_t backbone_hash() const;
  std::size_t capacity() const { return capacity_; }
  std::vector<std::string> resident_labels() const;

 private:
  struct Resident {
    std::shared_ptr<const AdapterPack> pack;
    std::uint64_t last_used = 0;
  };
  std::shared_ptr<const AdapterPack> checkout(const std::string& label);

  std::shared_ptr<Backbone> backbone_;
  std::size_t capacity_;
  mutable std::mutex mu_;
  std::map<std::string, Resident> residents_;
  std::uint64_t tick_ = 0;
  std::uint64_t loads_ = 0, evictions_ = 0, syntheses_ = 0;
};

// One-line request protocol (LOAD/UNLOAD/SYNTH/STATS/QUIT); responses are
// `OK ...` or `ERR <code> <message>` with codes 1 not-loaded, 2 fingerprint,
// 3 vocab, 4 capacity, 5 malformed. Kept separate from the socket layer so
// it is testable in-process.
std::string handle_request(Registry& registry, const std::string& line, bool& quit);

// Line-oriented TCP front end; one thread per connection.
class Server {
 public:
  Server(Registry& registry, std::uint16_t port);  // port 0 picks an ephemeral port
  ~Server();
  void start();
  void stop();
  std::uint16_t port() const { return port_; }

 private:
  void accept_loop();
  Registry& registry_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::thread accept_thread_;
  std::atomic<bool> running_{false};
  std::mutex workers_mu_;
  std::vector<std::thread> workers_;
};

}  // namespace alba
