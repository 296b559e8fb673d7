#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "sobolattr/analytic.hpp"
#include "sobolattr/attribution.hpp"
#include "sobolattr/blackbox.hpp"
#include "sobolattr/errors.hpp"
#include "sobolattr/estimator.hpp"
#include "sobolattr/evalbench.hpp"
#include "sobolattr/image.hpp"
#include "sobolattr/qmc.hpp"

namespace py = pybind11;
using namespace sobolattr;

namespace {

py::array_t<double> matrix_to_array(const Matrix& m) {
  py::array_t<double> out({m.rows(), m.cols()});
  std::copy(m.data().begin(), m.data().end(), out.mutable_data());
  return out;
}

py::array_t<double> image_to_array(const ImageTensor& image) {
  if (image.channels == 1) {
    py::array_t<double> out({image.height, image.width});
    std::copy(image.pixels.begin(), image.pixels.end(), out.mutable_data());
    return out;
  }
  py::array_t<double> out({image.height, image.width, image.channels});
  std::copy(image.pixels.begin(), image.pixels.end(), out.mutable_data());
  return out;
}

ImageTensor image_from_array(py::array array) {
  auto buf = py::array_t<double, py::array::c_style | py::array::forcecast>::ensure(array);
  if (!buf) throw ConfigError("image must be a numeric array");
  if (buf.ndim() == 2) {
    ImageTensor image(static_cast<std::size_t>(buf.shape(0)),
                      static_cast<std::size_t>(buf.shape(1)), 1);
    std::copy(buf.data(), buf.data() + buf.size(), image.pixels.begin());
    return image;
  }
  if (buf.ndim() == 3 && (buf.shape(2) == 1 || buf.shape(2) == 3)) {
    ImageTensor image(static_cast<std::size_t>(buf.shape(0)),
                      static_cast<std::size_t>(buf.shape(1)),
                      static_cast<std::size_t>(buf.shape(2)));
    std::copy(buf.data(), buf.data() + buf.size(), image.pixels.begin());
    return image;
  }
  throw ConfigError("image must be HxW or HxWx{1,3}");
}

// Bridges a Python callable into the Backend interface. The callable
// receives a list of inputs (ndarray image / list[str] tokens /
// list[float] vector) and returns one float (or k floats) per input.
class PyCallableBackend final : public Backend {
 public:
  PyCallableBackend(py::function fn, Modality modality)
      : fn_(std::move(fn)), modality_(modality) {}

  Modality modality() const override { return modality_; }
  std::string describe() const override { return "python-callable"; }

  std::vector<std::vector<double>> score_batch(const std::vector<Input>& inputs) override {
    py::list batch;
    for (const auto& input : inputs) {
      if (const auto* vec = std::get_if<std::vector<double>>(&input)) {
        batch.append(py::cast(*vec));
      } else if (const auto* img = std::get_if<ImageTensor>(&input)) {
        batch.append(image_to_array(*img));
      } else {
        batch.append(py::cast(std::get<TokenSequence>(input).tokens));
      }
    }
    const py::object result = fn_(batch);
    std::vector<std::vector<double>> scores;
    scores.reserve(inputs.size());
    for (const auto& item : py::cast<py::sequence>(result)) {
      if (py::isinstance<py::float_>(item) || py::isinstance<py::int_>(item)) {
        scores.push_back({py::cast<double>(item)});
      } else {
        scores.push_back(py::cast<std::vector<double>>(item));
      }
    }
    return scores;
  }

 private:
  py::function fn_;
  Modality modality_;
};

struct HandleBundle {
  std::unique_ptr<BlackBoxHandle> handle;
  Input input;
};

// Resolves (model, input) into a backend handle plus the pipeline input.
HandleBundle resolve(py::object model, py::object input, std::optional<std::size_t> dimension) {
  Input x;
  Modality modality;
  if (input.is_none()) {
    modality = Modality::Vector;
  } else if (py::isinstance<py::str>(input)) {
    x = tokenize(py::cast<std::string>(input));
    modality = Modality::Text;
  } else if (py::isinstance<py::list>(input) || py::isinstance<py::tuple>(input)) {
    TokenSequence seq;
    seq.tokens = py::cast<std::vector<std::string>>(input);
    x = std::move(seq);
    modality = Modality::Text;
  } else {
    x = image_from_array(py::cast<py::array>(input));
    modality = Modality::Image;
  }

  HandleBundle bundle;
  if (py::isinstance<py::str>(model)) {
    bundle.handle = std::make_unique<BlackBoxHandle>(
        make_backend(py::cast<std::string>(model), modality));
  } else if (py::isinstance<py::function>(model)) {
    bundle.handle = std::make_unique<BlackBoxHandle>(std::make_unique<PyCallableBackend>(
        py::cast<py::function>(model), modality));
  } else {
    throw ConfigError("model must be a spec string or a callable");
  }

  if (bundle.handle->modality() == Modality::Vector) {
    std::size_t dim = dimension.value_or(0);
    if (dim == 0) {
      const auto native = bundle.handle->native_dimension();
      if (!native) throw ConfigError("vector models need dimension= for callables");
      dim = *native;
    }
    x = std::vector<double>(dim, 0.0);
  }
  bundle.input = std::move(x);
  return bundle;
}

py::dict result_to_dict(const Attribution& at, std::size_t n_designs) {
  py::dict out;
  out["Si"] = py::cast(at.result.first_order);
  out["STi"] = py::cast(at.result.total_order);
  if (at.result.signed_total) out["STi_signed"] = py::cast(*at.result.signed_total);
  out["f0"] = at.result.empirical_mean;
  out["variance"] = at.result.empirical_variance;
  out["forwards"] = at.result.forwards_used;
  out["N"] = n_designs;
  py::array_t<double> grid({at.map.grid.grid_h, at.map.grid.grid_w});
  std::copy(at.map.grid.values.begin(), at.map.grid.values.end(), grid.mutable_data());
  out["grid"] = grid;
  out["heatmap"] = image_to_array(at.map.heatmap);
  return out;
}

py::dict curve_to_dict(const FidelityCurve& curve) {
  py::dict out;
  out["fractions"] = py::cast(curve.fractions);
  out["scores"] = py::cast(curve.scores);
  out["auc"] = curve.auc;
  return out;
}

EstimatorVariant variant_from(const std::string& name) {
  if (name == "total") return EstimatorVariant::Total;
  if (name == "first") return EstimatorVariant::First;
  if (name == "signed") return EstimatorVariant::SignedTotal;
  throw ConfigError("estimator must be total, first or signed");
}

PerturbConfig perturb_from(const std::string& kind, double mu, double sigma_max,
                           double threshold) {
  PerturbConfig p;
  if (kind == "inpaint") {
    p.kind = PerturbKind::Inpaint;
  } else if (kind == "blur") {
    p.kind = PerturbKind::Blur;
  } else if (kind == "tokens") {
    p.kind = PerturbKind::Tokens;
  } else {
    throw ConfigError("perturbation must be inpaint, blur or tokens");
  }
  p.mu = mu;
  p.sigma_max = sigma_max;
  p.token_threshold = threshold;
  return p;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Black-box attribution via Sobol total-order sensitivity indices";

  py::register_exception<UnsupportedDimensionError>(m, "UnsupportedDimensionError");
  py::register_exception<DesignShapeError>(m, "DesignShapeError");
  py::register_exception<DegenerateFunctionError>(m, "DegenerateFunctionError");
  py::register_exception<OracleIntractableError>(m, "OracleIntractableError");
  py::register_exception<TransportError>(m, "TransportError");
  py::register_exception<ProtocolError>(m, "ProtocolError");
  py::register_exception<AmbiguousOutputError>(m, "AmbiguousOutputError");
  py::register_exception<UndefinedTargetError>(m, "UndefinedTargetError");
  py::register_exception<UndefinedCorrelationError>(m, "UndefinedCorrelationError");

  m.def("set_directions_path", &qmc::set_default_directions_path,
        "Override the direction-number table location for this process");
  m.def("default_directions_path", &qmc::default_directions_path);

  m.def(
      "sobol_points",
      [](std::size_t dimension, std::size_t count) {
        qmc::SobolSequence seq(dimension);
        return matrix_to_array(seq.next_points(count));
      },
      py::arg("dimension"), py::arg("count"),
      "Low-discrepancy points in [0,1)^dimension (zero point skipped)");

  m.def(
      "paired_mask_matrices",
      [](std::size_t d, std::size_t n, std::optional<std::uint64_t> seed) {
        auto [a, b] = qmc::paired_mask_matrices(d, n, seed);
        return py::make_tuple(matrix_to_array(a), matrix_to_array(b));
      },
      py::arg("d"), py::arg("n"), py::arg("seed") = py::none(),
      "The two independent N x d mask matrices feeding the estimator design");

  m.def(
      "estimate_indices",
      [](const std::vector<double>& scores, std::size_t n, std::size_t d) {
        const SobolResult r = estimate_indices(scores, n, d);
        py::dict out;
        out["Si"] = py::cast(r.first_order);
        out["STi"] = py::cast(r.total_order);
        out["f0"] = r.empirical_mean;
        out["variance"] = r.empirical_variance;
        out["forwards"] = r.forwards_used;
        return out;
      },
      py::arg("scores"), py::arg("n"), py::arg("d"),
      "Jansen estimators over scores laid out [A | B | C(1) | ... | C(d)]");

  m.def(
      "explain",
      [](py::object model, py::object input, std::optional<std::size_t> dimension,
         std::pair<std::size_t, std::size_t> grid, std::size_t samples,
         const std::string& estimator, const std::string& perturbation, double mu,
         double sigma_max, double threshold, std::optional<std::size_t> target_class,
         std::optional<std::uint64_t> seed, std::size_t batch_size) {
        HandleBundle bundle = resolve(model, input, dimension);
        bundle.handle->set_batch_size(batch_size);
        if (target_class) bundle.handle->set_target_output(target_class);
        AttributionConfig config;
        config.grid_h = grid.first;
        config.grid_w = grid.second;
        config.n_designs = samples;
        config.variant = variant_from(estimator);
        config.perturb = perturb_from(perturbation, mu, sigma_max, threshold);
        config.shift_seed = seed;
        const Attribution at = attribute(*bundle.handle, bundle.input, config);
        return result_to_dict(at, samples);
      },
      py::arg("model"), py::arg("input") = py::none(), py::kw_only(),
      py::arg("dimension") = py::none(),
      py::arg("grid") = std::pair<std::size_t, std::size_t>{11, 11},
      py::arg("samples") = 32, py::arg("estimator") = "total",
      py::arg("perturbation") = "inpaint", py::arg("mu") = 0.0,
      py::arg("sigma_max") = 5.0, py::arg("threshold") = 0.5,
      py::arg("target_class") = py::none(), py::arg("seed") = py::none(),
      py::arg("batch_size") = 64,
      "Attribute one input: model is fn:/cmd:/http: spec or a Python callable "
      "receiving a list of inputs and returning one score per input");

  m.def(
      "occlusion",
      [](py::object model, py::object input, std::pair<std::size_t, std::size_t> grid,
         double baseline) {
        HandleBundle bundle = resolve(model, input, std::nullopt);
        const AttributionMap map = occlusion_baseline(*bundle.handle, bundle.input,
                                                      grid.first, grid.second, baseline);
        py::dict out;
        py::array_t<double> g({map.grid.grid_h, map.grid.grid_w});
        std::copy(map.grid.values.begin(), map.grid.values.end(), g.mutable_data());
        out["grid"] = g;
        out["heatmap"] = image_to_array(map.heatmap);
        return out;
      },
      py::arg("model"), py::arg("input"),
      py::arg("grid") = std::pair<std::size_t, std::size_t>{11, 11},
      py::arg("baseline") = 0.0);

  m.def(
      "rise",
      [](py::object model, py::object input, std::pair<std::size_t, std::size_t> grid,
         std::size_t n_masks, double keep_prob, std::uint64_t seed) {
        HandleBundle bundle = resolve(model, input, std::nullopt);
        const AttributionMap map = rise_baseline(*bundle.handle, bundle.input, grid.first,
                                                 grid.second, n_masks, keep_prob, seed);
        py::dict out;
        py::array_t<double> g({map.grid.grid_h, map.grid.grid_w});
        std::copy(map.grid.values.begin(), map.grid.values.end(), g.mutable_data());
        out["grid"] = g;
        out["heatmap"] = image_to_array(map.heatmap);
        return out;
      },
      py::arg("model"), py::arg("input"),
      py::arg("grid") = std::pair<std::size_t, std::size_t>{7, 7},
      py::arg("n_masks") = 8000, py::arg("keep_prob") = 0.5, py::arg("seed") = 0);

  m.def(
      "deletion_curve",
      [](py::object model, py::array image, py::array heatmap, double baseline, int steps) {
        HandleBundle bundle = resolve(model, image, std::nullopt);
        return curve_to_dict(deletion_curve(*bundle.handle,
                                            std::get<ImageTensor>(bundle.input),
                                            image_from_array(heatmap), baseline, steps));
      },
      py::arg("model"), py::arg("image"), py::arg("heatmap"), py::arg("baseline") = 0.5,
      py::arg("steps") = 100);

  m.def(
      "insertion_curve",
      [](py::object model, py::array image, py::array heatmap, double baseline, int steps) {
        HandleBundle bundle = resolve(model, image, std::nullopt);
        return curve_to_dict(insertion_curve(*bundle.handle,
                                             std::get<ImageTensor>(bundle.input),
                                             image_from_array(heatmap), baseline, steps));
      },
      py::arg("model"), py::arg("image"), py::arg("heatmap"), py::arg("baseline") = 0.5,
      py::arg("steps") = 100);

  m.def(
      "word_deletion_curve",
      [](py::object model, py::object tokens, const std::vector<double>& relevance,
         int max_words) {
        HandleBundle bundle = resolve(model, tokens, std::nullopt);
        return curve_to_dict(word_deletion_curve(*bundle.handle,
                                                 std::get<TokenSequence>(bundle.input),
                                                 relevance, max_words));
      },
      py::arg("model"), py::arg("tokens"), py::arg("relevance"), py::arg("max_words") = 20);

  m.def(
      "pointing_game",
      [](py::array heatmap, const std::vector<std::array<long, 4>>& boxes) {
        std::vector<Box> parsed;
        parsed.reserve(boxes.size());
        for (const auto& b : boxes) parsed.push_back(Box{b[0], b[1], b[2], b[3]});
        const PointingRecord record = pointing_game(image_from_array(heatmap), parsed);
        py::dict out;
        out["argmax"] = py::make_tuple(record.argmax_row, record.argmax_col);
        out["hit"] = record.hit;
        return out;
      },
      py::arg("heatmap"), py::arg("boxes"));

  m.def(
      "spearman_rank_correlation",
      [](const std::vector<double>& a, const std::vector<double>& b) {
        return spearman_rank_correlation(a, b);
      },
      py::arg("a"), py::arg("b"));

  m.def(
      "double_loop_oracle",
      [](const std::string& fn, const std::set<std::size_t>& subset, std::size_t grid) {
        return double_loop_oracle(find_builtin(fn), subset, grid);
      },
      py::arg("fn"), py::arg("subset"), py::arg("grid_points_per_dim") = 0,
      "Brute-force closed Sobol index of a builtin function by tensor-grid quadrature");

  m.def(
      "total_from_oracle",
      [](const std::string& fn, std::size_t index, std::size_t grid) {
        return total_from_oracle(find_builtin(fn), index, grid);
      },
      py::arg("fn"), py::arg("index"), py::arg("grid_points_per_dim") = 0);

  m.def("builtin_functions", [] {
    py::list out;
    for (const auto& fn : builtin_functions()) {
      py::dict item;
      item["name"] = fn.name;
      item["dimension"] = fn.dimension;
      if (fn.reference_first) item["reference_first"] = py::cast(*fn.reference_first);
      if (fn.reference_total) item["reference_total"] = py::cast(*fn.reference_total);
      out.append(std::move(item));
    }
    return out;
  });

#ifdef SOBOLATTR_VERSION
  m.attr("__version__") = SOBOLATTR_VERSION;
#else
  m.attr("__version__") = "dev";
#endif
}
