#pragma once

// HTTP front end for the victim: POST /v1/query and GET /v1/stats.
//
// Request:  {"mode": "hard"|"soft", "images": base64(uint8 n*c*h*w), "shape": [n,c,h,w], "phase": optional}
// Response: {"labels": [...]} or {"probs": [[...]]}, plus "charged", "queries_used", "budget_remaining".
// Errors:   {"error": "budget_exhausted"} (429), {"error": "bad_shape"} (400), {"error": "bad_request"} (400).

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <torch/torch.h>

#include "dfms/ledger.hpp"
#include "dfms/torch/victim.hpp"

namespace dfms::serve {

inline constexpr const char* kServedPhase = "served";

/// [-1, 1] floats to bytes: round((x + 1) * 127.5), clamped.
std::vector<std::uint8_t> quantize(const torch::Tensor& images);
torch::Tensor dequantize(const std::vector<std::uint8_t>& bytes, const std::vector<std::int64_t>& shape);

class VictimServer {
 public:
  VictimServer(std::shared_ptr<const victim::VictimModel> model, std::shared_ptr<oracle::QueryLedger> ledger);
  ~VictimServer();
  VictimServer(const VictimServer&) = delete;
  VictimServer& operator=(const VictimServer&) = delete;

  /// Binds (port 0 picks a free port), serves on a background thread and returns the port.
  int start(const std::string& host, int port);
  /// Binds and serves on the calling thread until stop().
  void run(const std::string& host, int port);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::thread thread_;
};

struct QueryReply {
  std::vector<std::int64_t> labels;
  torch::Tensor probs;
  std::int64_t charged = 0;
  std::int64_t queries_used = 0;
  std::optional<std::int64_t> budget_remaining;
};

/// Client for a served victim. Images are quantized to 8 bits on the wire.
class RemoteVictim : public victim::VictimEndpoint {
 public:
  explicit RemoteVictim(const std::string& url);
  ~RemoteVictim() override;

  QueryReply query(const torch::Tensor& batch, bool soft, std::string_view phase);
  std::vector<std::int64_t> hard(const torch::Tensor& batch, std::string_view phase) override;
  torch::Tensor soft(const torch::Tensor& batch, std::string_view phase) override;
  oracle::LedgerSnapshot ledger() const override;
  std::int64_t num_classes() const override;
  void restore_ledger(const oracle::LedgerSnapshot& snap) override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace dfms::serve
