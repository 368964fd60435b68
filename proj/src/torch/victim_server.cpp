#include "dfms/torch/victim_server.hpp"

#include <fmt/format.h>
#include <httplib.h>
#include <json.hpp>

#include "dfms/codec.hpp"
#include "dfms/error.hpp"
#include "dfms/log.hpp"

namespace dfms::serve {

using nlohmann::json;

std::vector<std::uint8_t> quantize(const torch::Tensor& images) {
  const auto q = images.detach().to(torch::kFloat32).add(1.0).mul(127.5).round().clamp(0, 255).to(torch::kUInt8).contiguous();
  return {q.data_ptr<std::uint8_t>(), q.data_ptr<std::uint8_t>() + q.numel()};
}

torch::Tensor dequantize(const std::vector<std::uint8_t>& bytes, const std::vector<std::int64_t>& shape) {
  return torch::from_blob(const_cast<std::uint8_t*>(bytes.data()), shape, torch::kUInt8)
      .to(torch::kFloat32)
      .div(127.5)
      .sub(1.0);
}

namespace {

json budget_fields(const oracle::QueryLedger& ledger, std::int64_t used) {
  json j;
  j["queries_used"] = used;
  const auto budget = ledger.budget();
  j["budget_remaining"] = budget ? json(*budget - used) : json(nullptr);
  return j;
}

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

}  // namespace

struct VictimServer::Impl {
  std::shared_ptr<const victim::VictimModel> model;
  std::shared_ptr<oracle::QueryLedger> ledger;
  httplib::Server server;

  void handle_query(const httplib::Request& req, httplib::Response& res) {
    json body;
    std::string mode;
    std::vector<std::int64_t> shape;
    std::vector<std::uint8_t> bytes;
    std::string phase = kServedPhase;
    try {
      body = json::parse(req.body);
      mode = body.at("mode").get<std::string>();
      shape = body.at("shape").get<std::vector<std::int64_t>>();
      bytes = codec::base64_decode(body.at("images").get<std::string>());
      if (body.contains("phase")) phase = body["phase"].get<std::string>();
    } catch (const std::exception& e) {
      return reply(res, 400, {{"error", "bad_request"}, {"detail", e.what()}});
    }
    if (mode != "hard" && mode != "soft") return reply(res, 400, {{"error", "bad_request"}, {"detail", "mode"}});
    const auto& in = model->input_shape();
    std::int64_t expected = 1;
    for (auto s : shape) expected *= s;
    if (shape.size() != 4 || shape[0] < 0 || shape[1] != in[0] || shape[2] != in[1] || shape[3] != in[2] ||
        expected != static_cast<std::int64_t>(bytes.size())) {
      return reply(res, 400, {{"error", "bad_shape"}});
    }
    std::int64_t used = 0;
    try {
      used = ledger->charge(phase, shape[0]);
    } catch (const BudgetExhausted&) {
      json j = budget_fields(*ledger, ledger->used());
      j["error"] = "budget_exhausted";
      return reply(res, 429, j);
    }
    json out = budget_fields(*ledger, used);
    out["charged"] = shape[0];
    if (shape[0] == 0) {
      out[mode == "hard" ? "labels" : "probs"] = json::array();
      return reply(res, 200, out);
    }
    const auto probs = victim::softmax_double(victim::victim_scores(*model, dequantize(bytes, shape)));
    if (mode == "hard") {
      out["labels"] = victim::argmax_lowest(probs);
    } else {
      const auto a = probs.accessor<double, 2>();
      json rows = json::array();
      for (std::int64_t r = 0; r < probs.size(0); ++r) {
        std::vector<double> row(static_cast<std::size_t>(probs.size(1)));
        for (std::int64_t c = 0; c < probs.size(1); ++c) row[static_cast<std::size_t>(c)] = a[r][c];
        rows.push_back(row);
      }
      out["probs"] = rows;
    }
    reply(res, 200, out);
  }

  void handle_stats(httplib::Response& res) {
    const auto snap = ledger->snapshot();
    json j = budget_fields(*ledger, snap.used);
    j["budget"] = snap.budget ? json(*snap.budget) : json(nullptr);
    j["phases"] = json::object();
    for (const auto& [k, v] : snap.phases) j["phases"][k] = v;
    j["num_classes"] = model->num_classes();
    j["input_shape"] = model->input_shape();
    j["heldout_accuracy"] = model->heldout_accuracy;
    reply(res, 200, j);
  }

  bool bind(const std::string& host, int& port) {
    server.Post("/v1/query", [this](const httplib::Request& req, httplib::Response& res) { handle_query(req, res); });
    server.Get("/v1/stats", [this](const httplib::Request&, httplib::Response& res) { handle_stats(res); });
    if (port == 0) {
      port = server.bind_to_any_port(host);
      return port > 0;
    }
    return server.bind_to_port(host, port);
  }
};

VictimServer::VictimServer(std::shared_ptr<const victim::VictimModel> model, std::shared_ptr<oracle::QueryLedger> ledger)
    : impl_(std::make_unique<Impl>()) {
  impl_->model = std::move(model);
  impl_->ledger = std::move(ledger);
}

VictimServer::~VictimServer() { stop(); }

int VictimServer::start(const std::string& host, int port) {
  if (!impl_->bind(host, port)) throw IoError(fmt::format("cannot bind {}:{}", host, port));
  thread_ = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return port;
}

void VictimServer::run(const std::string& host, int port) {
  if (!impl_->bind(host, port)) throw IoError(fmt::format("cannot bind {}:{}", host, port));
  log::info(fmt::format("victim serving on {}:{}", host, port));
  impl_->server.listen_after_bind();
}

void VictimServer::stop() {
  impl_->server.stop();
  if (thread_.joinable()) thread_.join();
}

struct RemoteVictim::Impl {
  std::string url;
  mutable httplib::Client client;
  explicit Impl(const std::string& u) : url(u), client(u) {
    client.set_read_timeout(600, 0);
    client.set_write_timeout(600, 0);
  }
};

RemoteVictim::RemoteVictim(const std::string& url) : impl_(std::make_unique<Impl>(url)) {}
RemoteVictim::~RemoteVictim() = default;

QueryReply RemoteVictim::query(const torch::Tensor& batch, bool soft, std::string_view phase) {
  json req;
  req["mode"] = soft ? "soft" : "hard";
  req["shape"] = batch.sizes().vec();
  req["images"] = codec::base64_encode(quantize(batch));
  req["phase"] = std::string(phase);
  const auto res = impl_->client.Post("/v1/query", req.dump(), "application/json");
  if (!res) throw IoError("victim endpoint unreachable: " + impl_->url);
  const json body = json::parse(res->body);
  if (res->status == 429) throw BudgetExhausted("remote victim: budget_exhausted");
  if (res->status != 200) throw ValidationError("remote victim: " + body.value("error", std::string("error")));
  QueryReply out;
  out.charged = body.at("charged").get<std::int64_t>();
  out.queries_used = body.at("queries_used").get<std::int64_t>();
  if (!body.at("budget_remaining").is_null()) out.budget_remaining = body["budget_remaining"].get<std::int64_t>();
  if (soft) {
    const auto rows = body.at("probs").get<std::vector<std::vector<double>>>();
    out.probs = torch::empty({static_cast<std::int64_t>(rows.size()), rows.empty() ? 0 : static_cast<std::int64_t>(rows[0].size())},
                             torch::kFloat64);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      out.probs[static_cast<std::int64_t>(r)] = torch::tensor(rows[r], torch::kFloat64);
    }
  } else {
    out.labels = body.at("labels").get<std::vector<std::int64_t>>();
  }
  return out;
}

std::vector<std::int64_t> RemoteVictim::hard(const torch::Tensor& batch, std::string_view phase) {
  return query(batch, false, phase).labels;
}

torch::Tensor RemoteVictim::soft(const torch::Tensor& batch, std::string_view phase) {
  return query(batch, true, phase).probs;
}

oracle::LedgerSnapshot RemoteVictim::ledger() const {
  const auto res = impl_->client.Get("/v1/stats");
  if (!res || res->status != 200) throw IoError("victim endpoint unreachable: " + impl_->url);
  const json body = json::parse(res->body);
  oracle::LedgerSnapshot snap;
  snap.used = body.at("queries_used").get<std::int64_t>();
  if (!body.at("budget").is_null()) snap.budget = body["budget"].get<std::int64_t>();
  for (const auto& [k, v] : body.at("phases").items()) snap.phases[k] = v.get<std::int64_t>();
  return snap;
}

std::int64_t RemoteVictim::num_classes() const {
  const auto res = impl_->client.Get("/v1/stats");
  if (!res || res->status != 200) throw IoError("victim endpoint unreachable: " + impl_->url);
  return json::parse(res->body).at("num_classes").get<std::int64_t>();
}

void RemoteVictim::restore_ledger(const oracle::LedgerSnapshot& snap) {
  const auto remote = ledger();
  if (remote.used != snap.used || remote.phases != snap.phases) {
    throw ValidationError(fmt::format("remote ledger ({} used) disagrees with the checkpoint ({} used)", remote.used, snap.used));
  }
}

}  // namespace dfms::serve
