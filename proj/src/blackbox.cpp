#include "sobolattr/blackbox.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "sobolattr/errors.hpp"
#include "sobolattr/ioutil.hpp"

namespace sobolattr {

using nlohmann::json;

Modality modality_of(const Input& input) {
  if (std::holds_alternative<std::vector<double>>(input)) return Modality::Vector;
  if (std::holds_alternative<ImageTensor>(input)) return Modality::Image;
  return Modality::Text;
}

namespace {

std::uint64_t content_hash(const Input& input) {
  if (const auto* vec = std::get_if<std::vector<double>>(&input)) {
    return fnv1a(vec->data(), vec->size() * sizeof(double), 0x1111111111111111ull);
  }
  if (const auto* img = std::get_if<ImageTensor>(&input)) {
    std::uint64_t h = fnv1a(img->pixels.data(), img->pixels.size() * sizeof(double),
                            0x2222222222222222ull);
    const std::uint64_t shape[3] = {img->height, img->width, img->channels};
    return fnv1a(shape, sizeof(shape), h);
  }
  const auto& toks = std::get<TokenSequence>(input).tokens;
  std::uint64_t h = 0x3333333333333333ull;
  for (const auto& t : toks) {
    h = fnv1a(t.data(), t.size(), h);
    h = fnv1a("\x1f", 1, h);  // separator so ["ab","c"] != ["a","bc"]
  }
  return h;
}

json input_to_json(const Input& input) {
  if (const auto* vec = std::get_if<std::vector<double>>(&input)) {
    return json(*vec);
  }
  if (const auto* img = std::get_if<ImageTensor>(&input)) {
    json j;
    j["pixels"] = img->pixels;
    j["shape"] = {img->height, img->width, img->channels};
    return j;
  }
  return json(std::get<TokenSequence>(input).tokens);
}

std::vector<std::vector<double>> parse_scores(const json& doc, std::uint64_t expect_id,
                                              std::size_t expect_count,
                                              const std::string& who) {
  if (!doc.is_object() || !doc.contains("id") || !doc.contains("scores")) {
    throw ProtocolError(who + ": response missing id/scores fields");
  }
  if (doc["id"].get<std::uint64_t>() != expect_id) {
    throw ProtocolError(who + ": response id mismatch");
  }
  const auto& scores = doc["scores"];
  if (!scores.is_array() || scores.size() != expect_count) {
    std::ostringstream os;
    os << who << ": expected " << expect_count << " score rows, got "
       << (scores.is_array() ? scores.size() : 0);
    throw ProtocolError(os.str());
  }
  std::vector<std::vector<double>> out;
  out.reserve(expect_count);
  for (const auto& row : scores) {
    if (row.is_number()) {  // tolerate bare floats for k = 1
      out.push_back({row.get<double>()});
      continue;
    }
    if (!row.is_array() || row.empty()) {
      throw ProtocolError(who + ": score rows must be non-empty arrays");
    }
    std::vector<double> k;
    k.reserve(row.size());
    for (const auto& v : row) {
      if (!v.is_number()) throw ProtocolError(who + ": non-numeric score");
      k.push_back(v.get<double>());
    }
    out.push_back(std::move(k));
  }
  return out;
}

class AnalyticBackend final : public Backend {
 public:
  explicit AnalyticBackend(AnalyticFunction fn) : fn_(std::move(fn)) {}
  Modality modality() const override { return Modality::Vector; }
  std::string describe() const override { return "fn:" + fn_.name; }
  std::optional<std::size_t> native_dimension() const override { return fn_.dimension; }
  std::vector<std::vector<double>> score_batch(const std::vector<Input>& inputs) override {
    std::vector<std::vector<double>> out;
    out.reserve(inputs.size());
    for (const auto& input : inputs) {
      const auto& vec = std::get<std::vector<double>>(input);
      out.push_back({fn_.evaluate_unit(vec)});
    }
    return out;
  }

 private:
  AnalyticFunction fn_;
};

class ImageBackend final : public Backend {
 public:
  ImageBackend(std::string name, std::function<double(const ImageTensor&)> fn)
      : name_(std::move(name)), fn_(std::move(fn)) {}
  Modality modality() const override { return Modality::Image; }
  std::string describe() const override { return "fn:" + name_; }
  std::vector<std::vector<double>> score_batch(const std::vector<Input>& inputs) override {
    std::vector<std::vector<double>> out;
    out.reserve(inputs.size());
    for (const auto& input : inputs) out.push_back({fn_(std::get<ImageTensor>(input))});
    return out;
  }

 private:
  std::string name_;
  std::function<double(const ImageTensor&)> fn_;
};

class TextBackend final : public Backend {
 public:
  TextBackend(std::string name, std::function<double(const TokenSequence&)> fn)
      : name_(std::move(name)), fn_(std::move(fn)) {}
  Modality modality() const override { return Modality::Text; }
  std::string describe() const override { return "fn:" + name_; }
  std::vector<std::vector<double>> score_batch(const std::vector<Input>& inputs) override {
    std::vector<std::vector<double>> out;
    out.reserve(inputs.size());
    for (const auto& input : inputs) out.push_back({fn_(std::get<TokenSequence>(input))});
    return out;
  }

 private:
  std::string name_;
  std::function<double(const TokenSequence&)> fn_;
};

}  // namespace

BlackBoxHandle::BlackBoxHandle(std::unique_ptr<Backend> backend)
    : backend_(std::move(backend)) {
  if (!backend_) throw ConfigError("BlackBoxHandle: null backend");
}

void BlackBoxHandle::set_batch_size(std::size_t size) {
  if (size < 1) throw ConfigError("batch size must be >= 1");
  batch_size_ = size;
}

void BlackBoxHandle::set_cache_enabled(bool enabled) {
  cache_enabled_ = enabled;
  if (!enabled) cache_.clear();
}

std::vector<double> BlackBoxHandle::score_chunk(const std::vector<Input>& chunk) {
  const auto raw = backend_->score_batch(chunk);
  if (raw.size() != chunk.size()) {
    throw ProtocolError(backend_->describe() + ": backend returned " +
                        std::to_string(raw.size()) + " rows for " +
                        std::to_string(chunk.size()) + " inputs");
  }
  calls_.fetch_add(chunk.size());
  std::vector<double> out;
  out.reserve(raw.size());
  for (const auto& k : raw) {
    if (k.size() == 1) {
      out.push_back(k[0]);
      continue;
    }
    if (!target_output_) {
      throw AmbiguousOutputError(backend_->describe() + " returns " +
                                 std::to_string(k.size()) +
                                 " outputs; select one with target_output");
    }
    if (*target_output_ >= k.size()) {
      throw ProtocolError("target output " + std::to_string(*target_output_) +
                          " out of range for k = " + std::to_string(k.size()));
    }
    out.push_back(k[*target_output_]);
  }
  return out;
}

std::vector<double> BlackBoxHandle::evaluate_batch(const std::vector<Input>& inputs) {
  if (inputs.empty()) throw Error("evaluate_batch: empty input list");
  for (const auto& input : inputs) {
    if (modality_of(input) != backend_->modality()) {
      throw ConfigError("input modality does not match backend " + backend_->describe());
    }
  }

  std::vector<double> results(inputs.size());
  std::vector<std::size_t> pending;  // first index per distinct uncached input
  std::vector<std::uint64_t> hashes(cache_enabled_ ? inputs.size() : 0);
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> repeats;
  if (cache_enabled_) {
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      hashes[i] = content_hash(inputs[i]);
      if (auto it = cache_.find(hashes[i]); it != cache_.end()) {
        results[i] = it->second;
        continue;
      }
      auto& group = repeats[hashes[i]];
      if (group.empty()) pending.push_back(i);
      group.push_back(i);
    }
  } else {
    pending.resize(inputs.size());
    for (std::size_t i = 0; i < inputs.size(); ++i) pending[i] = i;
  }

  for (std::size_t start = 0; start < pending.size(); start += batch_size_) {
    const std::size_t count = std::min(batch_size_, pending.size() - start);
    std::vector<Input> chunk;
    chunk.reserve(count);
    for (std::size_t k = 0; k < count; ++k) chunk.push_back(inputs[pending[start + k]]);
    const auto scores = score_chunk(chunk);
    for (std::size_t k = 0; k < count; ++k) {
      const std::size_t i = pending[start + k];
      if (cache_enabled_) {
        cache_[hashes[i]] = scores[k];
        for (std::size_t j : repeats[hashes[i]]) results[j] = scores[k];
      } else {
        results[i] = scores[k];
      }
    }
  }
  return results;
}

double BlackBoxHandle::evaluate_one(const Input& input) {
  return evaluate_batch({input})[0];
}

std::unique_ptr<Backend> make_analytic_backend(AnalyticFunction fn) {
  return std::make_unique<AnalyticBackend>(std::move(fn));
}

std::unique_ptr<Backend> make_image_backend(std::string name,
                                            std::function<double(const ImageTensor&)> fn) {
  return std::make_unique<ImageBackend>(std::move(name), std::move(fn));
}

std::unique_ptr<Backend> make_box_mean_backend(double r0, double c0, double r1, double c1) {
  std::ostringstream name;
  name << "box_mean:" << r0 << ',' << c0 << ',' << r1 << ',' << c1;
  auto fn = [r0, c0, r1, c1](const ImageTensor& img) {
    const std::size_t row0 = static_cast<std::size_t>(r0 * static_cast<double>(img.height));
    const std::size_t row1 = static_cast<std::size_t>(r1 * static_cast<double>(img.height));
    const std::size_t col0 = static_cast<std::size_t>(c0 * static_cast<double>(img.width));
    const std::size_t col1 = static_cast<std::size_t>(c1 * static_cast<double>(img.width));
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t r = row0; r < row1 && r < img.height; ++r) {
      for (std::size_t c = col0; c < col1 && c < img.width; ++c) {
        for (std::size_t ch = 0; ch < img.channels; ++ch) sum += img.at(r, c, ch);
        count += img.channels;
      }
    }
    return count ? sum / static_cast<double>(count) : 0.0;
  };
  return std::make_unique<ImageBackend>(name.str(), std::move(fn));
}

std::unique_ptr<Backend> make_text_backend(std::string name,
                                           std::function<double(const TokenSequence&)> fn) {
  return std::make_unique<TextBackend>(std::move(name), std::move(fn));
}

std::unique_ptr<Backend> make_keyword_backend(std::string word) {
  auto fn = [word](const TokenSequence& seq) {
    return std::find(seq.tokens.begin(), seq.tokens.end(), word) != seq.tokens.end()
               ? 1.0
               : 0.0;
  };
  return std::make_unique<TextBackend>("keyword:" + word, std::move(fn));
}

std::unique_ptr<Backend> make_backend(const std::string& spec, Modality hint) {
  if (spec.rfind("fn:", 0) == 0) {
    const std::string name = spec.substr(3);
    if (name.rfind("box_mean", 0) == 0) {
      double r0 = 0.25, c0 = 0.25, r1 = 0.75, c1 = 0.75;
      if (const auto colon = name.find(':'); colon != std::string::npos) {
        std::istringstream in(name.substr(colon + 1));
        char sep = 0;
        if (!(in >> r0 >> sep >> c0 >> sep >> r1 >> sep >> c1)) {
          throw ConfigError("box_mean expects fn:box_mean:r0,c0,r1,c1");
        }
      }
      return make_box_mean_backend(r0, c0, r1, c1);
    }
    if (name == "pixel_mean") {
      return make_image_backend("pixel_mean", [](const ImageTensor& img) {
        double sum = 0.0;
        for (double v : img.pixels) sum += v;
        return img.pixels.empty() ? 0.0 : sum / static_cast<double>(img.pixels.size());
      });
    }
    if (name.rfind("keyword:", 0) == 0) {
      return make_keyword_backend(name.substr(8));
    }
    return make_analytic_backend(find_builtin(name));
  }
  if (spec.rfind("cmd:", 0) == 0) {
    return make_subprocess_backend(spec.substr(4), hint);
  }
  const char* bearer_env = std::getenv("SOBOL_ATTRIB_BEARER");
  const std::string bearer = bearer_env ? bearer_env : "";
  if (spec.rfind("http://", 0) == 0 || spec.rfind("https://", 0) == 0) {
    return make_http_backend(spec, hint, bearer);
  }
  if (spec.rfind("http:", 0) == 0) {
    return make_http_backend("http://" + spec.substr(5), hint, bearer);
  }
  throw ConfigError("model spec must be fn:<name>, cmd:<command> or http:<url>: " + spec);
}

std::vector<double> evaluate_design(BlackBoxHandle& handle, const Input& x,
                                    const SampleDesign& design,
                                    const PerturbConfig& perturb, std::size_t grid_h,
                                    std::size_t grid_w) {
  if (design.rows.rows() != design.total_rows()) {
    throw DesignShapeError("evaluate_design: malformed design");
  }
  const Modality modality = handle.modality();

  // Perturbed inputs are materialized per batch to bound memory.
  const ImageTensor* image = std::get_if<ImageTensor>(&x);
  const TokenSequence* tokens = std::get_if<TokenSequence>(&x);
  ImageTensor blurred;
  if (modality == Modality::Image) {
    if (!image) throw ConfigError("evaluate_design: image backend needs an image input");
    if (grid_h * grid_w != design.dims) {
      throw DesignShapeError("evaluate_design: grid does not match design dimension");
    }
    if (perturb.kind == PerturbKind::Blur) blurred = gaussian_blur(*image, perturb.sigma_max);
  } else if (modality == Modality::Text) {
    if (!tokens) throw ConfigError("evaluate_design: text backend needs a token input");
    if (tokens->dims() != design.dims) {
      throw DesignShapeError("evaluate_design: token count does not match design dimension");
    }
  }

  auto perturb_row = [&](std::span<const double> row) -> Input {
    switch (modality) {
      case Modality::Vector:
        return std::vector<double>(row.begin(), row.end());
      case Modality::Image: {
        MaskGrid grid(grid_h, grid_w);
        grid.values.assign(row.begin(), row.end());
        const ImageTensor mask = upsample_mask(grid, image->height, image->width);
        if (perturb.kind == PerturbKind::Blur) return blend_with(*image, blurred, mask);
        return inpaint(*image, mask, perturb.mu);
      }
      case Modality::Text:
        return drop_tokens(*tokens, row, perturb.token_threshold);
    }
    throw Error("unreachable");
  };

  const std::size_t total = design.rows.rows();
  std::vector<double> scores;
  scores.reserve(total);
  const std::size_t batch = handle.batch_size();
  for (std::size_t start = 0; start < total; start += batch) {
    const std::size_t count = std::min(batch, total - start);
    std::vector<Input> chunk;
    chunk.reserve(count);
    for (std::size_t k = 0; k < count; ++k) chunk.push_back(perturb_row(design.rows.row(start + k)));
    try {
      const auto batch_scores = handle.evaluate_batch(chunk);
      scores.insert(scores.end(), batch_scores.begin(), batch_scores.end());
    } catch (const TransportError& e) {
      std::ostringstream os;
      os << "design rows [" << start << ", " << start + count << "): " << e.what();
      throw TransportError(os.str());
    } catch (const ProtocolError& e) {
      std::ostringstream os;
      os << "design rows [" << start << ", " << start + count << "): " << e.what();
      throw ProtocolError(os.str());
    }
  }
  return scores;
}

}  // namespace sobolattr

// ---------------------------------------------------------------------------
// transport backends
// ---------------------------------------------------------------------------

#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

namespace sobolattr {

namespace {

class SubprocessBackend final : public Backend {
 public:
  SubprocessBackend(std::string command, Modality modality)
      : command_(std::move(command)), modality_(modality) {}

  ~SubprocessBackend() override { shutdown(); }

  Modality modality() const override { return modality_; }
  std::string describe() const override { return "cmd:" + command_; }

  std::vector<std::vector<double>> score_batch(const std::vector<Input>& inputs) override {
    ensure_started();
    json request;
    const std::uint64_t id = next_id_++;
    request["id"] = id;
    json arr = json::array();
    for (const auto& input : inputs) arr.push_back(input_to_json(input));
    request["inputs"] = std::move(arr);
    const std::string line = request.dump() + "\n";
    if (!write_all(line)) {
      shutdown();
      throw TransportError(describe() + ": model process closed stdin");
    }
    std::string response;
    if (!read_line(response)) {
      shutdown();
      throw TransportError(describe() + ": model process closed stdout");
    }
    json doc;
    try {
      doc = json::parse(response);
    } catch (const std::exception& e) {
      throw ProtocolError(describe() + ": bad JSON response: " + e.what());
    }
    return parse_scores(doc, id, inputs.size(), describe());
  }

 private:
  std::string command_;
  Modality modality_;
  pid_t pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string buffer_;
  std::uint64_t next_id_ = 0;

  void ensure_started() {
    if (pid_ > 0) return;
    int in_pipe[2];
    int out_pipe[2];
    if (pipe(in_pipe) != 0 || pipe(out_pipe) != 0) {
      throw TransportError("pipe() failed for " + describe());
    }
    pid_ = fork();
    if (pid_ < 0) throw TransportError("fork() failed for " + describe());
    if (pid_ == 0) {
      dup2(in_pipe[0], STDIN_FILENO);
      dup2(out_pipe[1], STDOUT_FILENO);
      close(in_pipe[0]);
      close(in_pipe[1]);
      close(out_pipe[0]);
      close(out_pipe[1]);
      execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
      _exit(127);
    }
    close(in_pipe[0]);
    close(out_pipe[1]);
    to_child_ = in_pipe[1];
    from_child_ = out_pipe[0];
    signal(SIGPIPE, SIG_IGN);
  }

  void shutdown() {
    if (to_child_ >= 0) close(to_child_);
    if (from_child_ >= 0) close(from_child_);
    to_child_ = from_child_ = -1;
    if (pid_ > 0) {
      int status = 0;
      waitpid(pid_, &status, 0);
      pid_ = -1;
    }
  }

  bool write_all(const std::string& data) {
    std::size_t done = 0;
    while (done < data.size()) {
      const ssize_t n = ::write(to_child_, data.data() + done, data.size() - done);
      if (n <= 0) return false;
      done += static_cast<std::size_t>(n);
    }
    return true;
  }

  bool read_line(std::string& line) {
    for (;;) {
      if (const auto pos = buffer_.find('\n'); pos != std::string::npos) {
        line = buffer_.substr(0, pos);
        buffer_.erase(0, pos + 1);
        return true;
      }
      char chunk[4096];
      const ssize_t n = ::read(from_child_, chunk, sizeof(chunk));
      if (n <= 0) return false;
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }
};

}  // namespace

std::unique_ptr<Backend> make_subprocess_backend(std::string command, Modality modality) {
  return std::make_unique<SubprocessBackend>(std::move(command), modality);
}

}  // namespace sobolattr

#include <httplib.h>

namespace sobolattr {

namespace {

class HttpBackend final : public Backend {
 public:
  HttpBackend(std::string url, Modality modality, std::string bearer)
      : modality_(modality), bearer_(std::move(bearer)) {
    // split scheme://host[:port][/base]
    auto rest = url;
    const auto scheme_end = rest.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("bad http url: " + url);
    rest = rest.substr(scheme_end + 3);
    const auto slash = rest.find('/');
    host_port_ = url.substr(0, scheme_end + 3) + rest.substr(0, slash);
    base_path_ = slash == std::string::npos ? "" : rest.substr(slash);
    if (!base_path_.empty() && base_path_.back() == '/') base_path_.pop_back();
    timeout_ms_ = 30000;
    if (const char* env = std::getenv("SOBOL_ATTRIB_TIMEOUT_MS"); env && *env) {
      timeout_ms_ = std::strtol(env, nullptr, 10);
      if (timeout_ms_ <= 0) timeout_ms_ = 30000;
    }
  }

  Modality modality() const override { return modality_; }
  std::string describe() const override { return host_port_ + base_path_ + "/score"; }

  std::vector<std::vector<double>> score_batch(const std::vector<Input>& inputs) override {
    json request;
    const std::uint64_t id = next_id_++;
    request["id"] = id;
    json arr = json::array();
    for (const auto& input : inputs) arr.push_back(input_to_json(input));
    request["inputs"] = std::move(arr);
    const std::string body = request.dump();

    httplib::Client client(host_port_);
    client.set_connection_timeout(timeout_ms_ / 1000, (timeout_ms_ % 1000) * 1000);
    client.set_read_timeout(timeout_ms_ / 1000, (timeout_ms_ % 1000) * 1000);
    httplib::Headers headers;
    if (!bearer_.empty()) headers.emplace("Authorization", "Bearer " + bearer_);

    std::string failure;
    // 1 attempt + 2 retries; the identical body (same request id) is resent.
    for (int attempt = 0; attempt <= 2; ++attempt) {
      if (attempt > 0) {
        std::this_thread::sleep_for(std::chrono::milliseconds(100 << (attempt - 1)));
      }
      auto res = client.Post((base_path_ + "/score").c_str(), headers, body,
                             "application/json");
      if (!res) {
        failure = "unreachable (" + httplib::to_string(res.error()) + ")";
        continue;
      }
      if (res->status != 200) {
        failure = "HTTP " + std::to_string(res->status);
        continue;
      }
      json doc;
      try {
        doc = json::parse(res->body);
      } catch (const std::exception& e) {
        throw ProtocolError(describe() + ": bad JSON response: " + e.what());
      }
      return parse_scores(doc, id, inputs.size(), describe());
    }
    throw TransportError(describe() + ": " + failure + " after 3 attempts");
  }

 private:
  Modality modality_;
  std::string bearer_;
  std::string host_port_;
  std::string base_path_;
  long timeout_ms_;
  std::uint64_t next_id_ = 0;
};

}  // namespace

std::unique_ptr<Backend> make_http_backend(std::string url, Modality modality,
                                           std::string bearer_token) {
  return std::make_unique<HttpBackend>(std::move(url), modality, std::move(bearer_token));
}

}  // namespace sobolattr
