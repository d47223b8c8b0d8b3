#include "ulmv/data.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <random>

namespace ulmv {

bool ViewCatalog::scheduled(int view, int t) const {
  const auto& s = schedules[static_cast<size_t>(view)];
  return std::binary_search(s.begin(), s.end(), t);
}

int ViewCatalog::find_view(const std::string& name) const {
  for (size_t i = 0; i < views.size(); ++i)
    if (views[i].name == name) return static_cast<int>(i);
  return -1;
}

std::vector<int> Dataset::split_indices(const std::string& split) const {
  std::vector<int> out;
  for (size_t i = 0; i < patients.size(); ++i)
    if (patients[i].split == split) out.push_back(static_cast<int>(i));
  return out;
}

void Dataset::validate() const {
  for (const PatientSeries& p : patients) {
    if (static_cast<int>(p.steps.size()) != timepoints)
      throw DataFormatError("dataset: patient " + p.id + " has " + std::to_string(p.steps.size()) +
                            " timepoints, expected " + std::to_string(timepoints));
    for (int t = 0; t < timepoints; ++t) {
      const TimepointRecord& rec = p.steps[static_cast<size_t>(t)];
      if (rec.observations.size() != static_cast<size_t>(catalog.n_views()))
        throw DataFormatError("dataset: patient " + p.id + " has wrong view slot count");
      for (int v = 0; v < catalog.n_views(); ++v)
        if (rec.available(v) && !catalog.scheduled(v, t))
          throw DataFormatError("dataset: observation for view " + catalog.views[static_cast<size_t>(v)].name +
                                " at timepoint " + std::to_string(t) + " violates the cohort schedule");
      if (rec.label && (*rec.label < 0 || *rec.label >= class_count))
        throw DataFormatError("dataset: label out of range for patient " + p.id);
    }
  }
}

void SynthConfig::validate() const {
  auto prob = [](double p, const char* what) {
    if (!(p >= 0.0 && p < 1.0)) throw ConfigError(std::string(what) + " must be in [0,1)");
  };
  if (patients < 1) throw ConfigError("patients must be >= 1");
  if (timepoints < 1) throw ConfigError("timepoints must be >= 1");
  if (class_count < 2) throw ConfigError("class_count must be >= 2");
  if (latent_dim < 1) throw ConfigError("latent_dim must be >= 1");
  if (views.empty()) throw ConfigError("at least one view is required");
  prob(label_missing_prob, "label_missing_prob");
  if (!(train_fraction > 0 && val_fraction > 0 && train_fraction + val_fraction < 1.0))
    throw ConfigError("split fractions must be positive and sum below 1");
  bool any_reachable = false;
  for (const SynthViewConfig& v : views) {
    prob(v.missing_prob, ("view " + v.name + ".missing_prob").c_str());
    if (v.kind == ViewKind::image) {
      for (int64_t d : v.image_shape)
        if (d < 1) throw ConfigError("view " + v.name + ": image dimensions must be positive");
    } else if (v.columns.empty()) {
      throw ConfigError("view " + v.name + ": tabular views need columns");
    }
    if (v.schedule) {
      for (int t : *v.schedule)
        if (t < 0 || t >= timepoints)
          throw ConfigError("view " + v.name + ": schedule entry " + std::to_string(t) + " outside [0," +
                            std::to_string(timepoints) + ")");
      if (!v.schedule->empty()) any_reachable = true;
    } else {
      any_reachable = true;
    }
  }
  if (!any_reachable) throw ConfigError("impossible config: every view is absent at every timepoint");
}

ViewCatalog SynthConfig::catalog() const {
  ViewCatalog cat;
  for (size_t i = 0; i < views.size(); ++i) {
    const SynthViewConfig& vc = views[i];
    ViewSpec spec;
    spec.view_id = static_cast<int>(i);
    spec.name = vc.name;
    spec.kind = vc.kind;
    spec.image_shape = vc.image_shape;
    spec.schema.columns = vc.columns;
    spec.feature_dim = feature_dim;
    cat.views.push_back(std::move(spec));
    std::vector<int> sched;
    if (vc.schedule) {
      sched = *vc.schedule;
      std::sort(sched.begin(), sched.end());
      sched.erase(std::unique(sched.begin(), sched.end()), sched.end());
    } else {
      sched.resize(static_cast<size_t>(timepoints));
      std::iota(sched.begin(), sched.end(), 0);
    }
    cat.schedules.push_back(std::move(sched));
  }
  return cat;
}

namespace {

// Smooth radial bump used to paint one latent coordinate into an image.
struct Bump {
  double cx, cy, sigma;
};

Tensor<float> render_image(const std::array<int64_t, 3>& shape, const std::vector<Bump>& bumps,
                           const std::vector<double>& z, double strength, double noise,
                           std::mt19937_64& rng) {
  Tensor<float> img(Shape{shape[0], shape[1], shape[2]});
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int64_t h = shape[1], w = shape[2];
  for (int64_t c = 0; c < shape[0]; ++c) {
    for (int64_t y = 0; y < h; ++y) {
      for (int64_t x = 0; x < w; ++x) {
        double val = 0;
        for (size_t j = 0; j < bumps.size(); ++j) {
          const double dx = (static_cast<double>(x) - bumps[j].cx) / bumps[j].sigma;
          const double dy = (static_cast<double>(y) - bumps[j].cy) / bumps[j].sigma;
          val += z[j] * std::exp(-0.5 * (dx * dx + dy * dy));
        }
        img.at3(c, y, x) = static_cast<float>(strength * val + noise * gauss(rng));
      }
    }
  }
  return percentile_normalize(img);
}

}  // namespace

Dataset generate(const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  const int k = cfg.latent_dim;
  const int n_views = static_cast<int>(cfg.views.size());

  // Fixed dataset-level structures, drawn before any patient.
  std::vector<std::vector<double>> label_readout(static_cast<size_t>(cfg.class_count > 2 ? cfg.class_count : 1));
  for (auto& row : label_readout) {
    row.resize(static_cast<size_t>(k));
    double norm = 0;
    for (double& v : row) {
      v = gauss(rng);
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (double& v : row) v /= norm;
  }

  std::vector<std::vector<Bump>> view_bumps(static_cast<size_t>(n_views));
  std::vector<std::vector<std::vector<double>>> column_readout(static_cast<size_t>(n_views));
  for (int v = 0; v < n_views; ++v) {
    const SynthViewConfig& vc = cfg.views[static_cast<size_t>(v)];
    if (vc.kind == ViewKind::image) {
      const double h = static_cast<double>(vc.image_shape[1]);
      const double w = static_cast<double>(vc.image_shape[2]);
      for (int j = 0; j < k; ++j) {
        Bump b;
        b.cx = w * (0.2 + 0.6 * unif(rng));
        b.cy = h * (0.2 + 0.6 * unif(rng));
        b.sigma = 0.08 * (h + w) * (0.5 + unif(rng));
        view_bumps[static_cast<size_t>(v)].push_back(b);
      }
    } else {
      auto& cols = column_readout[static_cast<size_t>(v)];
      cols.resize(vc.columns.size());
      for (auto& a : cols) {
        a.resize(static_cast<size_t>(k));
        for (double& x : a) x = gauss(rng) / std::sqrt(static_cast<double>(k));
      }
    }
  }

  // Split assignment precedes per-patient content so the two are independent.
  std::vector<int> order(static_cast<size_t>(cfg.patients));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::string> split_of(static_cast<size_t>(cfg.patients));
  const int n_train = static_cast<int>(cfg.train_fraction * cfg.patients);
  const int n_val = static_cast<int>(cfg.val_fraction * cfg.patients);
  for (int i = 0; i < cfg.patients; ++i)
    split_of[static_cast<size_t>(order[static_cast<size_t>(i)])] =
        i < n_train ? "train" : (i < n_train + n_val ? "val" : "test");

  Dataset ds;
  ds.catalog = cfg.catalog();
  ds.timepoints = cfg.timepoints;
  ds.class_count = cfg.class_count;
  ds.seed = cfg.seed;

  const int l = cfg.timepoints;
  for (int i = 0; i < cfg.patients; ++i) {
    PatientSeries p;
    char buf[16];
    std::snprintf(buf, sizeof buf, "p%05d", i);
    p.id = buf;
    p.split = split_of[static_cast<size_t>(i)];
    p.steps.resize(static_cast<size_t>(l));
    for (auto& step : p.steps) step.observations.resize(static_cast<size_t>(n_views));

    // Latent trajectory with per-patient drift; z[t+1] feeds the label at t.
    std::vector<double> drift(static_cast<size_t>(k));
    for (double& d : drift) d = cfg.drift_scale * gauss(rng);
    std::vector<std::vector<double>> z(static_cast<size_t>(l + 1), std::vector<double>(static_cast<size_t>(k)));
    for (int j = 0; j < k; ++j) z[0][static_cast<size_t>(j)] = gauss(rng);
    for (int t = 1; t <= l; ++t)
      for (int j = 0; j < k; ++j)
        z[static_cast<size_t>(t)][static_cast<size_t>(j)] =
            z[static_cast<size_t>(t - 1)][static_cast<size_t>(j)] + drift[static_cast<size_t>(j)] +
            cfg.process_noise * gauss(rng);

    // Labels, then a fix-up guaranteeing at least one labeled timepoint.
    for (int t = 0; t < l; ++t) {
      const std::vector<double>& zt = z[static_cast<size_t>(t + 1)];
      int label;
      if (cfg.class_count == 2) {
        double s = 0;
        for (int j = 0; j < k; ++j) s += label_readout[0][static_cast<size_t>(j)] * zt[static_cast<size_t>(j)];
        label = (s + cfg.label_noise * gauss(rng)) > 0 ? 1 : 0;
      } else {
        int best = 0;
        double best_s = -1e300;
        for (int c = 0; c < cfg.class_count; ++c) {
          double s = cfg.label_noise * gauss(rng);
          for (int j = 0; j < k; ++j)
            s += label_readout[static_cast<size_t>(c)][static_cast<size_t>(j)] * zt[static_cast<size_t>(j)];
          if (s > best_s) {
            best_s = s;
            best = c;
          }
        }
        label = best;
      }
      if (unif(rng) >= cfg.label_missing_prob) p.steps[static_cast<size_t>(t)].label = label;
      if (t == l - 1) {
        bool any = false;
        for (int u = 0; u < l; ++u) any = any || p.steps[static_cast<size_t>(u)].label.has_value();
        if (!any) p.steps[static_cast<size_t>(t)].label = label;  // every patient keeps >= 1 label
      }
    }

    for (int v = 0; v < n_views; ++v) {
      const SynthViewConfig& vc = cfg.views[static_cast<size_t>(v)];
      for (int t = 0; t < l; ++t) {
        if (!ds.catalog.scheduled(v, t)) continue;
        if (unif(rng) < vc.missing_prob) continue;  // MCAR
        const std::vector<double>& zt = z[static_cast<size_t>(t)];
        if (vc.kind == ViewKind::image) {
          p.steps[static_cast<size_t>(t)].observations[static_cast<size_t>(v)] = render_image(
              vc.image_shape, view_bumps[static_cast<size_t>(v)], zt, vc.signal_strength, cfg.view_noise, rng);
        } else {
          RawRow row;
          for (size_t cidx = 0; cidx < vc.columns.size(); ++cidx) {
            const TabularColumn& col = vc.columns[cidx];
            double raw = cfg.view_noise * gauss(rng);
            for (int j = 0; j < k; ++j)
              raw += vc.signal_strength * column_readout[static_cast<size_t>(v)][cidx][static_cast<size_t>(j)] *
                     zt[static_cast<size_t>(j)];
            if (col.categorical) {
              const int nbins = col.cardinality();
              int bin = 0;
              for (int b = 1; b < nbins; ++b)
                if (raw > -1.5 + 3.0 * b / nbins) bin = b;
              row.push_back(RawValue::make_category(col.categories[static_cast<size_t>(bin)]));
            } else {
              row.push_back(RawValue::make_number(raw));
            }
          }
          p.steps[static_cast<size_t>(t)].observations[static_cast<size_t>(v)] =
              encode_missing_tabular(row, ds.catalog.views[static_cast<size_t>(v)].schema);
        }
      }
    }
    ds.patients.push_back(std::move(p));
  }
  ds.validate();
  return ds;
}

Tensor<float> percentile_normalize(const Tensor<float>& image, double fraction) {
  if (image.numel() == 0) throw ShapeError("percentile_normalize: empty image");
  if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("percentile_normalize: fraction must be in (0,1)");
  float lo = image.data[0];
  for (float v : image.data) lo = std::min(lo, v);

  std::vector<float> sorted(image.data);
  std::sort(sorted.begin(), sorted.end());
  const double pos = fraction * static_cast<double>(sorted.size() - 1);
  const size_t i0 = static_cast<size_t>(pos);
  const size_t i1 = std::min(i0 + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(i0);
  const double q = (1.0 - frac) * (sorted[i0] - lo) + frac * (sorted[i1] - lo);

  Tensor<float> out(image.shape);
  if (q <= 0.0) {
    std::cerr << "[ulmv] percentile_normalize: constant image, returning zeros\n";
    return out;
  }
  const double scale = fraction / q;
  for (int64_t i = 0; i < image.numel(); ++i)
    out.data[static_cast<size_t>(i)] = static_cast<float>((image.data[static_cast<size_t>(i)] - lo) * scale);
  return out;
}

Tensor<float> encode_missing_tabular(const RawRow& row, const TabularSchema& schema) {
  if (row.size() != schema.columns.size())
    throw ShapeError("encode_missing_tabular: row has " + std::to_string(row.size()) + " values, schema " +
                     std::to_string(schema.columns.size()) + " columns");
  Tensor<float> out(Shape{schema.n_columns()});
  for (size_t c = 0; c < row.size(); ++c) {
    const TabularColumn& col = schema.columns[c];
    const RawValue& v = row[c];
    if (col.categorical) {
      if (v.kind == RawValue::Kind::missing) {
        out[static_cast<int64_t>(c)] = static_cast<float>(col.missing_code());
      } else if (v.kind == RawValue::Kind::category) {
        auto it = std::find(col.categories.begin(), col.categories.end(), v.category);
        if (it == col.categories.end())
          throw DataFormatError("encode_missing_tabular: unknown category '" + v.category + "' in column " +
                                col.name);
        out[static_cast<int64_t>(c)] = static_cast<float>(it - col.categories.begin());
      } else {
        throw DataFormatError("encode_missing_tabular: numeric value in categorical column " + col.name);
      }
    } else {
      if (v.kind == RawValue::Kind::missing) out[static_cast<int64_t>(c)] = -1.0f;
      else if (v.kind == RawValue::Kind::number) out[static_cast<int64_t>(c)] = static_cast<float>(v.number);
      else
        throw DataFormatError("encode_missing_tabular: category in continuous column " + col.name);
    }
  }
  return out;
}

}  // namespace ulmv
