#include "dfms/ledger.hpp"

#include <chrono>
#include <sstream>

#include <fmt/format.h>

#include "dfms/error.hpp"

namespace dfms::oracle {

QueryLedger::QueryLedger(std::optional<std::int64_t> budget) : budget_(budget) {
  if (budget_ && *budget_ < 0) throw ValidationError("QueryLedger: budget must be nonnegative");
}

std::int64_t QueryLedger::charge(std::string_view phase, std::int64_t count) {
  if (count < 0) throw ValidationError("QueryLedger: charge must be nonnegative");
  std::lock_guard lock(mu_);
  if (budget_ && used_ + count > *budget_) {
    throw BudgetExhausted(fmt::format("query budget exhausted: {} used, {} requested, budget {}", used_, count, *budget_));
  }
  if (count == 0) return used_;
  used_ += count;
  auto it = phases_.find(phase);
  if (it == phases_.end()) it = phases_.emplace(std::string(phase), 0).first;
  it->second += count;
  if (log_.is_open()) {
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                        std::chrono::system_clock::now().time_since_epoch())
                        .count();
    log_ << phase << ' ' << count << ' ' << ms << '\n';
    log_.flush();
  }
  return used_;
}

std::int64_t QueryLedger::used() const {
  std::lock_guard lock(mu_);
  return used_;
}

std::optional<std::int64_t> QueryLedger::budget() const {
  std::lock_guard lock(mu_);
  return budget_;
}

std::optional<std::int64_t> QueryLedger::remaining() const {
  std::lock_guard lock(mu_);
  if (!budget_) return std::nullopt;
  return *budget_ - used_;
}

std::int64_t QueryLedger::phase_total(std::string_view phase) const {
  std::lock_guard lock(mu_);
  const auto it = phases_.find(phase);
  return it == phases_.end() ? 0 : it->second;
}

std::map<std::string, std::int64_t, std::less<>> QueryLedger::phase_breakdown() const {
  std::lock_guard lock(mu_);
  return phases_;
}

LedgerSnapshot QueryLedger::snapshot() const {
  std::lock_guard lock(mu_);
  return {used_, budget_, phases_};
}

void QueryLedger::restore(const LedgerSnapshot& snap) {
  std::int64_t sum = 0;
  for (const auto& [_, v] : snap.phases) sum += v;
  if (sum != snap.used) throw ValidationError("LedgerSnapshot: used must equal the sum of phase totals");
  if (snap.budget && snap.used > *snap.budget) throw ValidationError("LedgerSnapshot: used exceeds budget");
  std::lock_guard lock(mu_);
  used_ = snap.used;
  budget_ = snap.budget;
  phases_ = snap.phases;
}

void QueryLedger::attach_log(const std::filesystem::path& path) {
  std::lock_guard lock(mu_);
  log_.close();
  log_.open(path, std::ios::app);
  if (!log_) throw IoError("cannot open ledger log " + path.string());
}

void QueryLedger::replay_log(QueryLedger& ledger, const std::filesystem::path& path) {
  LedgerSnapshot snap;
  snap.budget = ledger.budget();
  if (std::filesystem::exists(path)) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read ledger log " + path.string());
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::istringstream fields(line);
      std::string phase;
      std::int64_t count = 0;
      if (!(fields >> phase >> count) || count < 0) throw IoError("malformed ledger log line: " + line);
      snap.phases[phase] += count;
      snap.used += count;
    }
  }
  if (snap.budget && snap.used > *snap.budget) {
    throw BudgetExhausted(fmt::format("ledger log records {} queries, above budget {}", snap.used, *snap.budget));
  }
  ledger.restore(snap);
  ledger.attach_log(path);
}

std::int64_t total_query_cost(std::int64_t n_c, std::int64_t n_q) {
  if (n_c < 0 || n_q < 0) throw ValidationError("total_query_cost: counts must be nonnegative");
  return 2 * n_c + n_q;
}

std::int64_t alternating_budget(std::int64_t epochs, std::int64_t per_epoch) {
  if (epochs < 0 || per_epoch < 0) throw ValidationError("alternating_budget: counts must be nonnegative");
  return epochs * per_epoch;
}

}  // namespace dfms::oracle
