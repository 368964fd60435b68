#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>

namespace dfms::oracle {

// Phase names used by the attack. "init_generator" pays for the clone that
// scores diversity while the generator is refined; "init_clone" pays for the
// clone retrained from scratch on the refined generator.
inline constexpr std::string_view kPhaseInitGenerator = "init_generator";
inline constexpr std::string_view kPhaseInitClone = "init_clone";
inline constexpr std::string_view kPhaseAlternating = "alternating";

struct LedgerSnapshot {
  std::int64_t used = 0;
  std::optional<std::int64_t> budget;
  std::map<std::string, std::int64_t, std::less<>> phases;
};

/// Monotone victim-query counter with a hard budget. Every charge is an
/// atomic check-and-add: a batch that would overflow is rejected whole and
/// the ledger is left unchanged.
class QueryLedger {
 public:
  explicit QueryLedger(std::optional<std::int64_t> budget = std::nullopt);
  QueryLedger(const QueryLedger&) = delete;
  QueryLedger& operator=(const QueryLedger&) = delete;

  /// Throws BudgetExhausted (ledger unchanged) if used + count > budget.
  /// Returns the total after this charge.
  std::int64_t charge(std::string_view phase, std::int64_t count);

  std::int64_t used() const;
  std::optional<std::int64_t> budget() const;
  /// nullopt when unlimited.
  std::optional<std::int64_t> remaining() const;
  std::int64_t phase_total(std::string_view phase) const;
  std::map<std::string, std::int64_t, std::less<>> phase_breakdown() const;

  LedgerSnapshot snapshot() const;
  void restore(const LedgerSnapshot& snap);

  /// Append every subsequent charge as "phase count unix_millis" to `path`.
  void attach_log(const std::filesystem::path& path);
  /// Rebuild totals from a log written by attach_log, then keep appending to it.
  static void replay_log(QueryLedger& ledger, const std::filesystem::path& path);

 private:
  mutable std::mutex mu_;
  std::int64_t used_ = 0;
  std::optional<std::int64_t> budget_;
  std::map<std::string, std::int64_t, std::less<>> phases_;
  std::ofstream log_;
};

/// 2 * n_C + N_Q.
std::int64_t total_query_cost(std::int64_t n_c, std::int64_t n_q);
/// N_Q = E * N_P: epochs of alternating training times queries per epoch.
std::int64_t alternating_budget(std::int64_t epochs, std::int64_t per_epoch);

}  // namespace dfms::oracle
