#include "alba/serving.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cstring>
#include <sstream>

#include "alba/melspec.hpp"

namespace alba {

MemoryReport analytic_memory_report(std::size_t n_packs, std::size_t d, std::size_t r,
                                    std::size_t n_sites, std::size_t d_spk,
                                    std::size_t backbone_total) {
  MemoryReport rep;
  rep.backbone_bytes = backbone_total * 4;
  std::size_t per_pack = (count_adapter_params(d, r, n_sites, static_cast<double>(backbone_total)).count + d_spk) * 4;
  rep.total_bytes = rep.backbone_bytes + n_packs * per_pack;
  if (n_packs > 0) rep.pack_bytes["<analytic x" + std::to_string(n_packs) + ">"] = per_pack;
  rep.ratio_vs_backbone = static_cast<double>(rep.total_bytes) / static_cast<double>(rep.backbone_bytes);
  return rep;
}

Registry::Registry(std::shared_ptr<Backbone> backbone, std::size_t capacity)
    : backbone_(std::move(backbone)), capacity_(capacity) {
  if (!backbone_) throw ServingError("registry: null backbone");
}

std::string Registry::load(const std::string& path) {
  auto pack = std::make_shared<AdapterPack>(load_pack(path));
  if (pack->fingerprint != backbone_->cfg.fingerprint())
    throw CompatibilityError("pack '" + pack->speaker_label +
                             "' was built for a different backbone config");
  if (pack->speaker_vec.numel() != backbone_->cfg.d_spk())
    throw CompatibilityError("pack speaker vector width mismatch");
  std::lock_guard<std::mutex> lock(mu_);
  if (capacity_ == 0) throw ServingError("registry capacity is zero");
  auto it = residents_.find(pack->speaker_label);
  if (it == residents_.end() && residents_.size() >= capacity_) {
    // evict the least recently used resident
    auto victim = residents_.begin();
    for (auto cur = residents_.begin(); cur != residents_.end(); ++cur)
      if (cur->second.last_used < victim->second.last_used) victim = cur;
    residents_.erase(victim);
    ++evictions_;
  }
  residents_[pack->speaker_label] = Resident{pack, ++tick_};
  ++loads_;
  return pack->speaker_label;
}

void Registry::unload(const std::string& label) {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = residents_.find(label);
  if (it == residents_.end()) throw ServingError("speaker '" + label + "' is not loaded");
  residents_.erase(it);
}

std::shared_ptr<const AdapterPack> Registry::checkout(const std::string& label) {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = residents_.find(label);
  if (it == residents_.end()) throw ServingError("speaker '" + label + "' is not loaded");
  it->second.last_used = ++tick_;
  ++syntheses_;
  return it->second.pack;
}

Registry::SynthResult Registry::synth(const std::string& label,
                                      const std::vector<std::uint32_t>& tokens) {
  std::shared_ptr<const AdapterPack> pack = checkout(label);
  // synthesis runs outside the registry lock on immutable state
  Tensor mel = backbone_->synthesize(tokens, pack->speaker_vec, &pack->adapters);
  SynthResult out;
  out.n_frames = mel.dim(0);
  out.n_mel_bins = mel.dim(1);
  out.mel.assign(mel.data().begin(), mel.data().end());
  return out;
}

Registry::Stats Registry::stats() const {
  std::lock_guard<std::mutex> lock(mu_);
  Stats s;
  s.residents = residents_.size();
  s.loads = loads_;
  s.evictions = evictions_;
  s.syntheses = syntheses_;
  s.backbone_bytes = backbone_->params.total_params() * 4;
  s.total_bytes = s.backbone_bytes;
  for (const auto& [label, r] : residents_) s.total_bytes += r.pack->total_param_count() * 4;
  return s;
}

MemoryReport Registry::memory_report() const {
  std::lock_guard<std::mutex> lock(mu_);
  MemoryReport rep;
  rep.backbone_bytes = backbone_->params.total_params() * 4;
  rep.total_bytes = rep.backbone_bytes;
  for (const auto& [label, r] : residents_) {
    std::size_t bytes = r.pack->total_param_count() * 4;
    rep.pack_bytes[label] = bytes;
    rep.total_bytes += bytes;
  }
  rep.ratio_vs_backbone = static_cast<double>(rep.total_bytes) / static_cast<double>(rep.backbone_bytes);
  return rep;
}

std::uint64_t Registry::backbone_hash() const { return store_hash(backbone_->params); }

std::vector<std::string> Registry::resident_labels() const {
  std::lock_guard<std::mutex> lock(mu_);
  std::vector<std::string> out;
  for (const auto& [label, r] : residents_) out.push_back(label);
  return out;
}

// ---------------------------------------------------------------------------
// protocol

namespace {

std::vector<std::string> tokenize(const std::string& line) {
  std::vector<std::string> parts;
  std::istringstream is(line);
  std::string p;
  while (is >> p) parts.push_back(p);
  return parts;
}

std::string err(int code, const std::string& msg) {
  std::string clean = msg;
  for (auto& c : clean)
    if (c == '\n' || c == '\r') c = ' ';
  return "ERR " + std::to_string(code) + " " + clean;
}

std::vector<std::uint32_t> parse_ids(const std::string& csv) {
  std::vector<std::uint32_t> ids;
  std::string cur;
  for (char c : csv + ",") {
    if (c == ',') {
      if (cur.empty()) throw ServingError("empty token id");
      ids.push_back(static_cast<std::uint32_t>(std::stoul(cur)));
      cur.clear();
    } else if (c >= '0' && c <= '9') {
      cur += c;
    } else {
      throw ServingError("bad token id character");
    }
  }
  if (ids.empty()) throw ServingError("no token ids");
  return ids;
}

}  // namespace

std::string handle_request(Registry& registry, const std::string& line, bool& quit) {
  quit = false;
  std::vector<std::string> parts = tokenize(line);
  if (parts.empty()) return err(5, "empty request");
  const std::string& cmd = parts[0];
  try {
    if (cmd == "QUIT") {
      quit = true;
      return "";
    }
    if (cmd == "LOAD") {
      if (parts.size() != 2) return err(5, "usage: LOAD <path>");
      return "OK " + registry.load(parts[1]);
    }
    if (cmd == "UNLOAD") {
      if (parts.size() != 2) return err(5, "usage: UNLOAD <label>");
      registry.unload(parts[1]);
      return "OK";
    }
    if (cmd == "SYNTH") {
      if (parts.size() != 4) return err(5, "usage: SYNTH <label> <out_path> <id1,id2,...>");
      std::vector<std::uint32_t> ids;
      try {
        ids = parse_ids(parts[3]);
      } catch (const std::exception& e) {
        return err(5, e.what());
      }
      Registry::SynthResult r = registry.synth(parts[1], ids);
      save_mels(parts[2], r.n_frames, r.n_mel_bins, r.mel);
      return "OK " + std::to_string(r.n_frames) + " " + parts[2];
    }
    if (cmd == "STATS") {
      Registry::Stats s = registry.stats();
      std::ostringstream os;
      os << "OK residents=" << s.residents << " loads=" << s.loads << " evictions=" << s.evictions
         << " syntheses=" << s.syntheses << " backbone_bytes=" << s.backbone_bytes
         << " total_bytes=" << s.total_bytes;
      return os.str();
    }
    return err(5, "unknown command '" + cmd + "'");
  } catch (const CompatibilityError& e) {
    return err(2, e.what());
  } catch (const VocabError& e) {
    return err(3, e.what());
  } catch (const ServingError& e) {
    std::string msg = e.what();
    if (msg.find("capacity") != std::string::npos) return err(4, msg);
    return err(1, msg);
  } catch (const std::exception& e) {
    return err(5, e.what());
  }
}

// ---------------------------------------------------------------------------
// tcp server

Server::Server(Registry& registry, std::uint16_t port) : registry_(registry) {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw ServingError("socket() failed");
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(port);
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    ::close(listen_fd_);
    throw ServingError("bind() failed on port " + std::to_string(port));
  }
  socklen_t len = sizeof(addr);
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  if (::listen(listen_fd_, 16) != 0) {
    ::close(listen_fd_);
    throw ServingError("listen() failed");
  }
}

Server::~Server() { stop(); }

void Server::start() {
  running_ = true;
  accept_thread_ = std::thread([this] { accept_loop(); });
}

void Server::accept_loop() {
  while (running_) {
    int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) {
      if (!running_) break;
      continue;
    }
    std::lock_guard<std::mutex> lock(workers_mu_);
    workers_.emplace_back([this, fd] {
      std::string buffer;
      char chunk[1024];
      bool quit = false;
      while (!quit) {
        ssize_t n = ::read(fd, chunk, sizeof(chunk));
        if (n <= 0) break;
        buffer.append(chunk, static_cast<std::size_t>(n));
        std::size_t pos;
        while (!quit && (pos = buffer.find('\n')) != std::string::npos) {
          std::string line = buffer.substr(0, pos);
          if (!line.empty() && line.back() == '\r') line.pop_back();
          buffer.erase(0, pos + 1);
          std::string response = handle_request(registry_, line, quit);
          if (!response.empty()) {
            response += "\n";
            std::size_t off = 0;
            while (off < response.size()) {
              ssize_t w = ::write(fd, response.data() + off, response.size() - off);
              if (w <= 0) {
                quit = true;
                break;
              }
              off += static_cast<std::size_t>(w);
            }
          }
        }
      }
      ::close(fd);
    });
  }
}

void Server::stop() {
  if (!running_.exchange(false)) {
    if (listen_fd_ >= 0) {
      ::close(listen_fd_);
      listen_fd_ = -1;
    }
    return;
  }
  ::shutdown(listen_fd_, SHUT_RDWR);
  ::close(listen_fd_);
  listen_fd_ = -1;
  if (accept_thread_.joinable()) accept_thread_.join();
  std::lock_guard<std::mutex> lock(workers_mu_);
  for (auto& w : workers_)
    if (w.joinable()) w.join();
  workers_.clear();
}

}  // namespace alba
