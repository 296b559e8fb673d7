#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "sobolattr/analytic.hpp"
#include "sobolattr/design.hpp"
#include "sobolattr/image.hpp"
#include "sobolattr/perturbation.hpp"

namespace sobolattr {

enum class Modality { Vector, Image, Text };

using Input = std::variant<std::vector<double>, ImageTensor, TokenSequence>;

Modality modality_of(const Input& input);

/// A scoring function reachable by some transport. Returns one k-vector of
/// scores per input; k is the backend's output arity (1 for the builtins).
class Backend {
 public:
  virtual ~Backend() = default;
  virtual Modality modality() const = 0;
  virtual std::string describe() const = 0;
  virtual std::vector<std::vector<double>> score_batch(const std::vector<Input>& inputs) = 0;
  /// Input dimension for backends that own one (analytic functions).
  virtual std::optional<std::size_t> native_dimension() const { return std::nullopt; }
};

/// Uniform, batched, counted access to a black-box scoring function.
/// The counter tracks single-input evaluations; scores[i] always corresponds
/// to inputs[i].
class BlackBoxHandle {
 public:
  explicit BlackBoxHandle(std::unique_ptr<Backend> backend);

  Modality modality() const { return backend_->modality(); }
  std::string describe() const { return backend_->describe(); }
  std::optional<std::size_t> native_dimension() const {
    return backend_->native_dimension();
  }

  std::size_t batch_size() const { return batch_size_; }
  void set_batch_size(std::size_t size);

  std::optional<std::size_t> target_output() const { return target_output_; }
  void set_target_output(std::optional<std::size_t> index) { target_output_ = index; }

  /// Content-hash score cache, off by default; useful where repeats occur
  /// (occlusion sweeps).
  void set_cache_enabled(bool enabled);

  std::uint64_t calls() const { return calls_.load(); }
  void reset_calls() { calls_.store(0); }

  /// Scores every input in order, splitting into batches of batch_size.
  /// Throws AmbiguousOutputError when the backend returns k > 1 components
  /// and no target output is selected.
  std::vector<double> evaluate_batch(const std::vector<Input>& inputs);

  double evaluate_one(const Input& input);

 private:
  std::unique_ptr<Backend> backend_;
  std::size_t batch_size_ = 64;
  std::optional<std::size_t> target_output_;
  std::atomic<std::uint64_t> calls_{0};
  bool cache_enabled_ = false;
  std::unordered_map<std::uint64_t, double> cache_;

  std::vector<double> score_chunk(const std::vector<Input>& chunk);
};

/// In-process vector-modality backend over an AnalyticFunction; inputs are
/// unit-cube points mapped through the function's own domain.
std::unique_ptr<Backend> make_analytic_backend(AnalyticFunction fn);

/// In-process synthetic image/text models for benchmarks.
std::unique_ptr<Backend> make_image_backend(std::string name,
                                            std::function<double(const ImageTensor&)> fn);
/// Mean intensity over a fractional box [r0,c0,r1,c1); linear in pixels.
std::unique_ptr<Backend> make_box_mean_backend(double r0, double c0, double r1, double c1);
std::unique_ptr<Backend> make_text_backend(std::string name,
                                           std::function<double(const TokenSequence&)> fn);
/// 1.0 when `word` is present, else 0.0.
std::unique_ptr<Backend> make_keyword_backend(std::string word);

/// Line-protocol subprocess backend: newline-delimited JSON over
/// stdin/stdout. Request {"id": n, "inputs": [...]} with images as
/// {"pixels": [...], "shape": [h,w,c]}, token sequences as string arrays and
/// vectors as number arrays; response {"id": n, "scores": [[k floats], ...]}.
std::unique_ptr<Backend> make_subprocess_backend(std::string command, Modality modality);

/// HTTP backend: POST <base>/score with the same JSON schema. Non-200 or
/// unreachable hosts raise TransportError after 2 retries with exponential
/// backoff; retries resend the identical request id. Timeout 30 s, override
/// with SOBOL_ATTRIB_TIMEOUT_MS. A bearer token, when provided, is passed
/// through as an Authorization header.
std::unique_ptr<Backend> make_http_backend(std::string url, Modality modality,
                                           std::string bearer_token = {});

/// Parses a CLI model spec: `fn:<name>`, `cmd:<command>`, `http:<url>`.
/// The modality hint is used by transport backends; fn: backends carry
/// their own.
std::unique_ptr<Backend> make_backend(const std::string& spec, Modality hint);

/// Scores one design under the configured perturbation of input x, in
/// design-row order. Vector-modality backends receive mask rows directly;
/// images go through upsample + inpaint/blur; token sequences through
/// thresholded dropping. Backend failures are annotated with the failing
/// row range.
std::vector<double> evaluate_design(BlackBoxHandle& handle, const Input& x,
                                    const SampleDesign& design,
                                    const PerturbConfig& perturb,
                                    std::size_t grid_h, std::size_t grid_w);

}  // namespace sobolattr
