// Native kernels mirroring the segui reference implementations.
//
// Every kernel reproduces its Python counterpart bit for bit: reductions
// accumulate strictly left to right (row-major), squares are written as
// explicit multiplies, and the extension is compiled with
// -ffp-contract=off so no multiply-add pairs get fused.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

namespace py = pybind11;

using DArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

namespace {

struct Box {
  double x1, y1, x2, y2;
};

Box as_box(const DArray& arr) {
  auto buf = arr.request();
  if (buf.size != 4) {
    throw py::value_error("box must have 4 entries [x1, y1, x2, y2]");
  }
  const double* p = static_cast<const double*>(buf.ptr);
  Box b{p[0], p[1], p[2], p[3]};
  if (!(std::isfinite(b.x1) && std::isfinite(b.y1) && std::isfinite(b.x2) && std::isfinite(b.y2))) {
    throw py::value_error("bbox coordinates must be finite");
  }
  if (b.x1 > b.x2 || b.y1 > b.y2) {
    std::ostringstream msg;
    msg << "degenerate bbox: [" << b.x1 << ", " << b.y1 << ", " << b.x2 << ", " << b.y2 << "]";
    throw py::value_error(msg.str());
  }
  return b;
}

std::pair<double, double> as_screen(const DArray& arr) {
  auto buf = arr.request();
  if (buf.size != 2) {
    throw py::value_error("screen must have 2 entries [w, h]");
  }
  const double* p = static_cast<const double*>(buf.ptr);
  if (!(p[0] >= 1.0 && p[1] >= 1.0)) {
    throw py::value_error("screen dimensions must be >= 1");
  }
  return {p[0], p[1]};
}

// --- dense point reward -----------------------------------------------------

double point_reward_one(double px, double py_, const Box& b, double w, double h) {
  double cx = (b.x1 + b.x2) / 2.0;
  double cy = (b.y1 + b.y2) / 2.0;
  double dx = px / w - cx / w;
  double dy = py_ / h - cy / h;
  double d = std::sqrt(dx * dx + dy * dy);
  double best = 0.0;
  const double corners[4][2] = {{0.0, 0.0}, {w, 0.0}, {0.0, h}, {w, h}};
  for (const auto& corner : corners) {
    double ex = corner[0] / w - cx / w;
    double ey = corner[1] / h - cy / h;
    double dist = std::sqrt(ex * ex + ey * ey);
    if (dist > best) {
      best = dist;
    }
  }
  double ratio = d / best;
  if (ratio > 1.0) {
    ratio = 1.0;
  }
  double decay = 1.0 - ratio;
  decay = decay * decay;
  bool inside = b.x1 <= px && px <= b.x2 && b.y1 <= py_ && py_ <= b.y2;
  return inside ? 1.0 + decay : decay;
}

double point_reward(double px, double py_, const DArray& box, const DArray& screen) {
  Box b = as_box(box);
  auto [w, h] = as_screen(screen);
  return point_reward_one(px, py_, b, w, h);
}

py::array_t<double> point_reward_batch(const DArray& px, const DArray& py_, const DArray& boxes,
                                       const DArray& screens) {
  auto bp = px.request();
  auto bq = py_.request();
  auto bb = boxes.request();
  auto bs = screens.request();
  py::ssize_t n = bp.size;
  if (bq.size != n || bb.ndim != 2 || bb.shape[0] != n || bb.shape[1] != 4 || bs.ndim != 2 ||
      bs.shape[0] != n || bs.shape[1] != 2) {
    throw py::value_error("batched inputs must be px[n], py[n], boxes[n,4], screens[n,2]");
  }
  auto out = py::array_t<double>(n);
  const double* xp = static_cast<const double*>(bp.ptr);
  const double* yp = static_cast<const double*>(bq.ptr);
  const double* boxp = static_cast<const double*>(bb.ptr);
  const double* scrp = static_cast<const double*>(bs.ptr);
  double* op = static_cast<double*>(out.request().ptr);
  {
    py::gil_scoped_release release;
    for (py::ssize_t i = 0; i < n; ++i) {
      Box b{boxp[4 * i], boxp[4 * i + 1], boxp[4 * i + 2], boxp[4 * i + 3]};
      op[i] = point_reward_one(xp[i], yp[i], b, scrp[2 * i], scrp[2 * i + 1]);
    }
  }
  return out;
}

// --- sparse baseline ---------------------------------------------------------

double sparse_point_reward(double px, double py_, const DArray& box) {
  Box b = as_box(box);
  bool inside = b.x1 <= px && px <= b.x2 && b.y1 <= py_ && py_ <= b.y2;
  return inside ? 1.0 : 0.0;
}

py::array_t<double> sparse_point_reward_batch(const DArray& px, const DArray& py_, const DArray& boxes) {
  auto bp = px.request();
  auto bq = py_.request();
  auto bb = boxes.request();
  py::ssize_t n = bp.size;
  if (bq.size != n || bb.ndim != 2 || bb.shape[0] != n || bb.shape[1] != 4) {
    throw py::value_error("batched inputs must be px[n], py[n], boxes[n,4]");
  }
  auto out = py::array_t<double>(n);
  const double* xp = static_cast<const double*>(bp.ptr);
  const double* yp = static_cast<const double*>(bq.ptr);
  const double* boxp = static_cast<const double*>(bb.ptr);
  double* op = static_cast<double*>(out.request().ptr);
  {
    py::gil_scoped_release release;
    for (py::ssize_t i = 0; i < n; ++i) {
      const double* b = boxp + 4 * i;
      bool inside = b[0] <= xp[i] && xp[i] <= b[2] && b[1] <= yp[i] && yp[i] <= b[3];
      op[i] = inside ? 1.0 : 0.0;
    }
  }
  return out;
}

// --- group-relative advantages ----------------------------------------------

void advantages_into(const double* rewards, py::ssize_t n, double* out) {
  double total = 0.0;
  for (py::ssize_t i = 0; i < n; ++i) {
    total += rewards[i];
  }
  double mean = total / static_cast<double>(n);
  double acc = 0.0;
  for (py::ssize_t i = 0; i < n; ++i) {
    double d = rewards[i] - mean;
    acc += d * d;
  }
  double std = std::sqrt(acc / static_cast<double>(n));
  if (std == 0.0) {
    for (py::ssize_t i = 0; i < n; ++i) {
      out[i] = 0.0;
    }
    return;
  }
  for (py::ssize_t i = 0; i < n; ++i) {
    out[i] = (rewards[i] - mean) / std;
  }
}

void check_group(const double* rewards, py::ssize_t n) {
  if (n < 2) {
    throw py::value_error("group statistics need at least 2 rewards, got " + std::to_string(n));
  }
  for (py::ssize_t i = 0; i < n; ++i) {
    if (!std::isfinite(rewards[i])) {
      throw py::value_error("rewards must be finite");
    }
  }
}

py::array_t<double> group_advantages(const DArray& rewards) {
  auto buf = rewards.request();
  const double* p = static_cast<const double*>(buf.ptr);
  check_group(p, buf.size);
  auto out = py::array_t<double>(buf.size);
  advantages_into(p, buf.size, static_cast<double*>(out.request().ptr));
  return out;
}

py::array_t<double> group_advantages_batch(const DArray& rewards) {
  auto buf = rewards.request();
  if (buf.ndim != 2) {
    throw py::value_error("batched rewards must be a (groups, group_size) array");
  }
  py::ssize_t groups = buf.shape[0];
  py::ssize_t n = buf.shape[1];
  const double* p = static_cast<const double*>(buf.ptr);
  for (py::ssize_t g = 0; g < groups; ++g) {
    check_group(p + g * n, n);
  }
  auto out = py::array_t<double>({groups, n});
  double* op = static_cast<double*>(out.request().ptr);
  {
    py::gil_scoped_release release;
    for (py::ssize_t g = 0; g < groups; ++g) {
      advantages_into(p + g * n, n, op + g * n);
    }
  }
  return out;
}

// --- categorical KL and the k3 estimator --------------------------------------

constexpr double kSumTol = 1e-9;

double kl_one(const double* p_old, const double* p_new, py::ssize_t k) {
  double total_old = 0.0;
  double total_new = 0.0;
  for (py::ssize_t i = 0; i < k; ++i) {
    if (p_old[i] < 0 || p_new[i] < 0) {
      throw py::value_error("probabilities must be non-negative");
    }
    total_old += p_old[i];
    total_new += p_new[i];
  }
  if (std::fabs(total_old - 1.0) > kSumTol || std::fabs(total_new - 1.0) > kSumTol) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "distributions must sum to 1 (got " << total_old << ", " << total_new << ")";
    throw py::value_error(msg.str());
  }
  double acc = 0.0;
  for (py::ssize_t i = 0; i < k; ++i) {
    double po = p_old[i];
    if (po > 0.0) {
      double pn = p_new[i];
      if (pn <= 0.0) {
        throw py::value_error("p_new must be strictly positive wherever p_old > 0");
      }
      acc += po * std::log(po / pn);
    }
  }
  return acc;
}

double categorical_kl(const DArray& p_old, const DArray& p_new) {
  auto bo = p_old.request();
  auto bn = p_new.request();
  if (bo.size != bn.size) {
    throw py::value_error("distribution sizes differ: " + std::to_string(bo.size) + " vs " +
                          std::to_string(bn.size));
  }
  return kl_one(static_cast<const double*>(bo.ptr), static_cast<const double*>(bn.ptr), bo.size);
}

py::array_t<double> categorical_kl_batch(const DArray& p_old, const DArray& p_new) {
  auto bo = p_old.request();
  auto bn = p_new.request();
  if (bo.ndim != 2 || bn.ndim != 2 || bo.shape[0] != bn.shape[0] || bo.shape[1] != bn.shape[1]) {
    throw py::value_error("batched distributions must be matching (batch, k) arrays");
  }
  py::ssize_t batch = bo.shape[0];
  py::ssize_t k = bo.shape[1];
  auto out = py::array_t<double>(batch);
  const double* po = static_cast<const double*>(bo.ptr);
  const double* pn = static_cast<const double*>(bn.ptr);
  double* op = static_cast<double*>(out.request().ptr);
  for (py::ssize_t i = 0; i < batch; ++i) {
    op[i] = kl_one(po + i * k, pn + i * k, k);
  }
  return out;
}

double kl_k3(double p_old_action, double p_new_action) {
  if (p_old_action <= 0 || p_new_action <= 0) {
    throw py::value_error("action probabilities must be > 0");
  }
  double r = p_old_action / p_new_action;
  return r - 1.0 - std::log(r);
}

py::array_t<double> kl_k3_batch(const DArray& p_old, const DArray& p_new) {
  auto bo = p_old.request();
  auto bn = p_new.request();
  if (bo.size != bn.size) {
    throw py::value_error("batched action probabilities must have matching sizes");
  }
  auto out = py::array_t<double>(bo.size);
  const double* po = static_cast<const double*>(bo.ptr);
  const double* pn = static_cast<const double*>(bn.ptr);
  double* op = static_cast<double*>(out.request().ptr);
  for (py::ssize_t i = 0; i < bo.size; ++i) {
    op[i] = kl_k3(po[i], pn[i]);
  }
  return out;
}

// --- attention aggregation -----------------------------------------------------

py::array_t<double> aggregate_attention(const DArray& layers, long vision_start, long vision_end,
                                        long grid_rows, long grid_cols, long screen_width,
                                        long screen_height) {
  auto buf = layers.request();
  if (buf.ndim != 3) {
    std::ostringstream msg;
    msg << "layers must be (L, T, A), got " << buf.ndim << " dimensions";
    throw py::value_error(msg.str());
  }
  long n_layers = static_cast<long>(buf.shape[0]);
  long n_tokens = static_cast<long>(buf.shape[1]);
  long n_all = static_cast<long>(buf.shape[2]);
  long span = vision_end - vision_start;
  if (span != grid_rows * grid_cols) {
    std::ostringstream msg;
    msg << "vision span of " << span << " tokens does not fill a " << grid_rows << "x" << grid_cols
        << " grid";
    throw py::value_error(msg.str());
  }
  if (vision_start < 0 || vision_end > n_all) {
    throw py::value_error("vision span outside the token axis");
  }
  if (screen_width < 1 || screen_height < 1) {
    throw py::value_error("screen dimensions must be >= 1");
  }
  const double* data = static_cast<const double*>(buf.ptr);
  for (py::ssize_t i = 0; i < buf.size; ++i) {
    if (!(data[i] >= 0.0)) {
      throw py::value_error("attention weights must be >= 0");
    }
  }

  long n_cells = grid_rows * grid_cols;
  auto out = py::array_t<double>({screen_height, screen_width});
  double* op = static_cast<double*>(out.request().ptr);
  {
    py::gil_scoped_release release;
    std::vector<double> acc(n_cells, 0.0);
    for (long layer = 0; layer < n_layers; ++layer) {
      for (long token = 0; token < n_tokens; ++token) {
        const double* row = data + (layer * n_tokens + token) * n_all + vision_start;
        double total = 0.0;
        for (long k = 0; k < n_cells; ++k) {
          total += row[k];
        }
        if (total > 0.0) {
          for (long k = 0; k < n_cells; ++k) {
            acc[k] = acc[k] + row[k] / total;
          }
        }
      }
    }
    double denom = static_cast<double>(n_layers * n_tokens);
    std::vector<double> mean(n_cells);
    for (long k = 0; k < n_cells; ++k) {
      mean[k] = acc[k] / denom;
    }
    // nearest-neighbor projection, then min-max over the projected pixels
    for (long y = 0; y < screen_height; ++y) {
      long r = (y * grid_rows) / screen_height;
      for (long x = 0; x < screen_width; ++x) {
        long c = (x * grid_cols) / screen_width;
        op[y * screen_width + x] = mean[r * grid_cols + c];
      }
    }
    long n_pix = screen_height * screen_width;
    double lo = op[0];
    double hi = op[0];
    for (long i = 1; i < n_pix; ++i) {
      if (op[i] < lo) lo = op[i];
      if (op[i] > hi) hi = op[i];
    }
    if (hi > lo) {
      for (long i = 0; i < n_pix; ++i) {
        op[i] = (op[i] - lo) / (hi - lo);
      }
    } else {
      for (long i = 0; i < n_pix; ++i) {
        op[i] = 0.0;
      }
    }
  }
  return out;
}

// --- gating predicates -----------------------------------------------------------

struct MapView {
  const double* data;
  long height;
  long width;
};

MapView as_map(const DArray& m, py::buffer_info& buf) {
  buf = m.request();
  if (buf.ndim != 2 || buf.size == 0) {
    throw py::value_error("attention map must be a non-empty 2-D array");
  }
  const double* p = static_cast<const double*>(buf.ptr);
  for (py::ssize_t i = 0; i < buf.size; ++i) {
    if (!std::isfinite(p[i])) {
      throw py::value_error("attention map values must be finite");
    }
    if (p[i] < 0.0 || p[i] > 1.0) {
      throw py::value_error("attention map values must lie in [0, 1]");
    }
  }
  return {p, static_cast<long>(buf.shape[0]), static_cast<long>(buf.shape[1])};
}

bool pixel_region(const Box& b, long height, long width, long& x_lo, long& x_hi, long& y_lo,
                  long& y_hi) {
  x_lo = std::max(0L, static_cast<long>(std::ceil(b.x1 - 0.5)));
  x_hi = std::min(width - 1, static_cast<long>(std::floor(b.x2 - 0.5)));
  y_lo = std::max(0L, static_cast<long>(std::ceil(b.y1 - 0.5)));
  y_hi = std::min(height - 1, static_cast<long>(std::floor(b.y2 - 0.5)));
  return x_lo <= x_hi && y_lo <= y_hi;
}

bool p_peak_view(const MapView& m, const Box& b, double tau) {
  long x_lo, x_hi, y_lo, y_hi;
  if (!pixel_region(b, m.height, m.width, x_lo, x_hi, y_lo, y_hi)) {
    return false;
  }
  double peak = m.data[y_lo * m.width + x_lo];
  for (long y = y_lo; y <= y_hi; ++y) {
    for (long x = x_lo; x <= x_hi; ++x) {
      double v = m.data[y * m.width + x];
      if (v > peak) peak = v;
    }
  }
  return peak > tau;
}

bool p_global_view(const MapView& m, const Box& b) {
  long x_lo, x_hi, y_lo, y_hi;
  if (!pixel_region(b, m.height, m.width, x_lo, x_hi, y_lo, y_hi)) {
    return false;
  }
  double region_sum = 0.0;
  for (long y = y_lo; y <= y_hi; ++y) {
    for (long x = x_lo; x <= x_hi; ++x) {
      region_sum += m.data[y * m.width + x];
    }
  }
  double region_count = static_cast<double>((y_hi - y_lo + 1) * (x_hi - x_lo + 1));
  double total = 0.0;
  long n_pix = m.height * m.width;
  for (long i = 0; i < n_pix; ++i) {
    total += m.data[i];
  }
  double region_mean = region_sum / region_count;
  double global_mean = total / static_cast<double>(n_pix);
  return region_mean > global_mean;
}

void check_tau(double tau) {
  if (!(tau > 0.0 && tau < 1.0)) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "tau must lie in (0, 1), got " << tau;
    throw py::value_error(msg.str());
  }
}

bool p_peak(const DArray& m, const DArray& box, double tau) {
  check_tau(tau);
  py::buffer_info buf;
  MapView view = as_map(m, buf);
  return p_peak_view(view, as_box(box), tau);
}

bool p_global(const DArray& m, const DArray& box) {
  py::buffer_info buf;
  MapView view = as_map(m, buf);
  return p_global_view(view, as_box(box));
}

int gate(const DArray& m, const DArray& box, double tau) {
  check_tau(tau);
  py::buffer_info buf;
  MapView view = as_map(m, buf);
  Box b = as_box(box);
  return (p_peak_view(view, b, tau) && p_global_view(view, b)) ? 1 : 0;
}

py::array_t<std::int64_t> gate_batch(const DArray& maps, const DArray& boxes, double tau) {
  check_tau(tau);
  auto bm = maps.request();
  auto bb = boxes.request();
  if (bm.ndim != 3 || bb.ndim != 2 || bb.shape[0] != bm.shape[0] || bb.shape[1] != 4) {
    throw py::value_error("batched inputs must be maps[b,h,w] and boxes[b,4]");
  }
  long batch = static_cast<long>(bm.shape[0]);
  long height = static_cast<long>(bm.shape[1]);
  long width = static_cast<long>(bm.shape[2]);
  const double* mp = static_cast<const double*>(bm.ptr);
  const double* boxp = static_cast<const double*>(bb.ptr);
  for (py::ssize_t i = 0; i < bm.size; ++i) {
    if (!std::isfinite(mp[i])) {
      throw py::value_error("attention map values must be finite");
    }
    if (mp[i] < 0.0 || mp[i] > 1.0) {
      throw py::value_error("attention map values must lie in [0, 1]");
    }
  }
  auto out = py::array_t<std::int64_t>(batch);
  std::int64_t* op = static_cast<std::int64_t*>(out.request().ptr);
  {
    py::gil_scoped_release release;
    for (long i = 0; i < batch; ++i) {
      const double* bp = boxp + 4 * i;
      Box b{bp[0], bp[1], bp[2], bp[3]};
      MapView view{mp + i * height * width, height, width};
      op[i] = (p_peak_view(view, b, tau) && p_global_view(view, b)) ? 1 : 0;
    }
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_native, m) {
  m.doc() = "Native reward, advantage, KL, and attention-gating kernels";

  m.def("point_reward", &point_reward, py::arg("px"), py::arg("py"), py::arg("box"),
        py::arg("screen"),
        "Dense point reward in [0, 2]; bit-identical to the reference implementation.");
  m.def("point_reward_batch", &point_reward_batch, py::arg("px"), py::arg("py"), py::arg("boxes"),
        py::arg("screens"));
  m.def("sparse_point_reward", &sparse_point_reward, py::arg("px"), py::arg("py"), py::arg("box"),
        "Binary hit/miss reward.");
  m.def("sparse_point_reward_batch", &sparse_point_reward_batch, py::arg("px"), py::arg("py"),
        py::arg("boxes"));
  m.def("group_advantages", &group_advantages, py::arg("rewards"),
        "Group rewards normalized to mean 0 and population std 1.");
  m.def("group_advantages_batch", &group_advantages_batch, py::arg("rewards"));
  m.def("categorical_kl", &categorical_kl, py::arg("p_old"), py::arg("p_new"),
        "Exact KL(p_old || p_new) between categorical distributions.");
  m.def("categorical_kl_batch", &categorical_kl_batch, py::arg("p_old"), py::arg("p_new"));
  m.def("kl_k3", &kl_k3, py::arg("p_old_action"), py::arg("p_new_action"),
        "Single-sample KL estimator r - 1 - ln(r), r = p_old/p_new.");
  m.def("kl_k3_batch", &kl_k3_batch, py::arg("p_old_action"), py::arg("p_new_action"));
  m.def("aggregate_attention", &aggregate_attention, py::arg("layers"), py::arg("vision_start"),
        py::arg("vision_end"), py::arg("grid_rows"), py::arg("grid_cols"), py::arg("screen_width"),
        py::arg("screen_height"),
        "Reduce raw decoder attention to one min-max normalized (H, W) map.");
  m.def("p_peak", &p_peak, py::arg("attention_map"), py::arg("box"), py::arg("tau"),
        "True when some pixel inside the box strictly exceeds tau.");
  m.def("p_global", &p_global, py::arg("attention_map"), py::arg("box"),
        "True when the box mean strictly exceeds the global mean.");
  m.def("gate", &gate, py::arg("attention_map"), py::arg("box"), py::arg("tau"),
        "1 when both gating predicates hold, else 0.");
  m.def("gate_batch", &gate_batch, py::arg("attention_maps"), py::arg("boxes"), py::arg("tau"));
}
