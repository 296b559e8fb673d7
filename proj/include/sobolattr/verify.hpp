#pragma once

#include <string>
#include <vector>

namespace sobolattr {

struct CheckResult {
  int id = 0;
  std::string name;
  bool pass = false;
  std::string detail;
};

struct VerifyOptions {
  /// CLI binary driven by the end-to-end determinism check; empty skips
  /// the subprocess round and fails that check with an explanation.
  std::string cli_path;
  /// Scratch directory for generated inputs/outputs; default under tmp.
  std::string scratch_dir;
};

/// Runs the full analytic acceptance suite (estimator convergence, oracle
/// equivalence, estimator laws, budgets, QMC quality, convergence harness,
/// fidelity sanity, determinism). Each check is independent; exceptions are
/// captured as failures.
std::vector<CheckResult> run_acceptance_checks(const VerifyOptions& options);

}  // namespace sobolattr
