#include "sentspan/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "sentspan/errors.hpp"

namespace sentspan {

namespace {

constexpr double kInvSqrt2 = 0.7071067811865476;
constexpr double kInvSqrt2Pi = 0.3989422804014327;

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
  const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
  return cdf + x * pdf;
}

// y(L x B) = x(L x A) * w(A x B), row-major.
void matmul(const double* x, const double* w, double* y, int L, int A, int B) {
  std::fill(y, y + static_cast<size_t>(L) * static_cast<size_t>(B), 0.0);
  for (int i = 0; i < L; ++i) {
    const double* xi = x + static_cast<size_t>(i) * static_cast<size_t>(A);
    double* yi = y + static_cast<size_t>(i) * static_cast<size_t>(B);
    for (int a = 0; a < A; ++a) {
      const double xa = xi[a];
      if (xa == 0.0) continue;
      const double* wa = w + static_cast<size_t>(a) * static_cast<size_t>(B);
      for (int b = 0; b < B; ++b) yi[b] += xa * wa[b];
    }
  }
}

// dw(A x B) += x(L x A)^T * dy(L x B)
void matmul_grad_w(const double* x, const double* dy, double* dw, int L, int A, int B) {
  for (int i = 0; i < L; ++i) {
    const double* xi = x + static_cast<size_t>(i) * static_cast<size_t>(A);
    const double* di = dy + static_cast<size_t>(i) * static_cast<size_t>(B);
    for (int a = 0; a < A; ++a) {
      const double xa = xi[a];
      if (xa == 0.0) continue;
      double* dwa = dw + static_cast<size_t>(a) * static_cast<size_t>(B);
      for (int b = 0; b < B; ++b) dwa[b] += xa * di[b];
    }
  }
}

// dx(L x A) += dy(L x B) * w(A x B)^T
void matmul_grad_x(const double* dy, const double* w, double* dx, int L, int A, int B) {
  for (int i = 0; i < L; ++i) {
    const double* di = dy + static_cast<size_t>(i) * static_cast<size_t>(B);
    double* dxi = dx + static_cast<size_t>(i) * static_cast<size_t>(A);
    for (int a = 0; a < A; ++a) {
      const double* wa = w + static_cast<size_t>(a) * static_cast<size_t>(B);
      double acc = 0.0;
      for (int b = 0; b < B; ++b) acc += di[b] * wa[b];
      dxi[a] += acc;
    }
  }
}

void layer_norm_row(const double* x, const double* scale, const double* offset, int D,
                    double* xhat, double* inv_std, double* out) {
  double mean = 0.0;
  for (int d = 0; d < D; ++d) mean += x[d];
  mean /= D;
  double var = 0.0;
  for (int d = 0; d < D; ++d) {
    const double c = x[d] - mean;
    var += c * c;
  }
  var /= D;
  const double is = 1.0 / std::sqrt(var + kLayerNormEpsilon);
  *inv_std = is;
  for (int d = 0; d < D; ++d) {
    xhat[d] = (x[d] - mean) * is;
    out[d] = scale[d] * xhat[d] + offset[d];
  }
}

void layer_norm_backward_row(const double* dy, const double* scale, const double* xhat,
                             double inv_std, int D, double* dscale, double* doffset,
                             double* dx, std::vector<double>& dxhat) {
  dxhat.resize(static_cast<size_t>(D));
  double m1 = 0.0, m2 = 0.0;
  for (int d = 0; d < D; ++d) {
    dscale[d] += dy[d] * xhat[d];
    doffset[d] += dy[d];
    dxhat[static_cast<size_t>(d)] = dy[d] * scale[d];
    m1 += dxhat[static_cast<size_t>(d)];
    m2 += dxhat[static_cast<size_t>(d)] * xhat[d];
  }
  m1 /= D;
  m2 /= D;
  for (int d = 0; d < D; ++d) {
    dx[d] = inv_std * (dxhat[static_cast<size_t>(d)] - m1 - xhat[d] * m2);
  }
}

}  // namespace

void ModelConfig::validate() const {
  if (vocab_size < 6) raise("BadConfig", "vocab_size must be at least 6");
  if (model_dim < 1 || num_heads < 1 || num_layers < 1 || ffn_dim < 1 ||
      max_source_length < 1) {
    raise("BadConfig", "all model dimensions must be at least 1");
  }
  if (model_dim % num_heads != 0) {
    raise("BadConfig", "model_dim must be divisible by num_heads");
  }
  if (!(dropout_rate >= 0.0) || dropout_rate >= 1.0) {
    raise("BadConfig", "dropout_rate must lie in [0, 1)");
  }
}

std::string Params::layer_name(int layer, std::string_view field) {
  return "layer" + std::to_string(layer) + "." + std::string(field);
}

Params::Params(const ModelConfig& config) : cfg_(config) {
  cfg_.validate();
  const int D = cfg_.model_dim;
  const int F = cfg_.ffn_dim;
  size_t offset = 0;
  auto add = [&](std::string name, std::vector<int> shape) {
    size_t size = 1;
    for (int s : shape) size *= static_cast<size_t>(s);
    segments_.push_back({name, std::move(shape), offset, size});
    index_.emplace(std::move(name), segments_.size() - 1);
    offset += size;
  };
  add("token_embedding", {cfg_.vocab_size, D});
  add("position_embedding", {cfg_.max_source_length, D});
  for (int l = 0; l < cfg_.num_layers; ++l) {
    add(layer_name(l, "attn_wq"), {D, D});
    add(layer_name(l, "attn_wk"), {D, D});
    add(layer_name(l, "attn_wv"), {D, D});
    add(layer_name(l, "attn_wo"), {D, D});
    add(layer_name(l, "ln1_scale"), {D});
    add(layer_name(l, "ln1_offset"), {D});
    add(layer_name(l, "ffn_w1"), {D, F});
    add(layer_name(l, "ffn_b1"), {F});
    add(layer_name(l, "ffn_w2"), {F, D});
    add(layer_name(l, "ffn_b2"), {D});
    add(layer_name(l, "ln2_scale"), {D});
    add(layer_name(l, "ln2_offset"), {D});
  }
  add("head_w", {D, 2});
  add("head_b", {2});
  data_.assign(offset, 0.0);
}

Params Params::init(const ModelConfig& config) {
  Params p(config);
  Rng rng(config.seed);
  for (const auto& seg : p.segments_) {
    double* out = p.data_.data() + seg.offset;
    if (seg.shape.size() == 2) {
      const double r = std::sqrt(6.0 / (seg.shape[0] + seg.shape[1]));
      for (size_t i = 0; i < seg.size; ++i) out[i] = rng.next_symmetric(r);
    } else if (seg.name.find("_scale") != std::string::npos) {
      std::fill(out, out + seg.size, 1.0);
    }
    // biases and offsets stay zero
  }
  return p;
}

std::span<double> Params::view(std::string_view name) {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) raise("Internal", "unknown parameter segment: " + std::string(name));
  const auto& seg = segments_[it->second];
  return {data_.data() + seg.offset, seg.size};
}

std::span<const double> Params::view(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) raise("Internal", "unknown parameter segment: " + std::string(name));
  const auto& seg = segments_[it->second];
  return {data_.data() + seg.offset, seg.size};
}

SpanLogits forward_cached(const Params& params, std::span<const int> source_ids,
                          std::span<const int> source_mask, ForwardCache& cache,
                          Rng* dropout_rng) {
  const ModelConfig& cfg = params.config();
  const int L = static_cast<int>(source_ids.size());
  if (L != cfg.max_source_length || source_mask.size() != source_ids.size()) {
    raise("ShapeMismatch", "forward expects " + std::to_string(cfg.max_source_length) +
                               " ids and an equal-length mask, got " + std::to_string(L) +
                               " ids and " + std::to_string(source_mask.size()) + " mask entries");
  }
  const int D = cfg.model_dim;
  const int H = cfg.num_heads;
  const int hd = cfg.head_dim();
  const int F = cfg.ffn_dim;
  const size_t LD = static_cast<size_t>(L) * static_cast<size_t>(D);

  int n_real = 0;
  for (int i = 0; i < L; ++i) {
    const int id = source_ids[static_cast<size_t>(i)];
    if (id < 0 || id >= cfg.vocab_size) {
      raise("IdOutOfRange", "token id " + std::to_string(id) + " outside vocab of size " +
                                std::to_string(cfg.vocab_size));
    }
    if (source_mask[static_cast<size_t>(i)] != 0) ++n_real;
  }
  if (n_real == 0) raise("AllMasked", "attention mask has no real positions");

  cache.ids.assign(source_ids.begin(), source_ids.end());
  cache.mask.assign(source_mask.begin(), source_mask.end());
  cache.layers.resize(static_cast<size_t>(cfg.num_layers));

  cache.embedded.resize(LD);
  {
    auto tok = params.view("token_embedding");
    auto pos = params.view("position_embedding");
    for (int i = 0; i < L; ++i) {
      const double* te = tok.data() + static_cast<size_t>(source_ids[static_cast<size_t>(i)]) *
                                          static_cast<size_t>(D);
      const double* pe = pos.data() + static_cast<size_t>(i) * static_cast<size_t>(D);
      double* out = cache.embedded.data() + static_cast<size_t>(i) * static_cast<size_t>(D);
      for (int d = 0; d < D; ++d) out[d] = te[d] + pe[d];
    }
  }

  const bool drop = dropout_rng != nullptr && cfg.dropout_rate > 0.0;
  const double keep_scale = drop ? 1.0 / (1.0 - cfg.dropout_rate) : 1.0;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

  std::vector<double> x = cache.embedded;
  for (int l = 0; l < cfg.num_layers; ++l) {
    auto& c = cache.layers[static_cast<size_t>(l)];
    c.input = x;
    c.q.resize(LD);
    c.k.resize(LD);
    c.v.resize(LD);
    matmul(c.input.data(), params.view(Params::layer_name(l, "attn_wq")).data(), c.q.data(), L, D, D);
    matmul(c.input.data(), params.view(Params::layer_name(l, "attn_wk")).data(), c.k.data(), L, D, D);
    matmul(c.input.data(), params.view(Params::layer_name(l, "attn_wv")).data(), c.v.data(), L, D, D);

    c.attn_weights.assign(static_cast<size_t>(H) * static_cast<size_t>(L) * static_cast<size_t>(L), 0.0);
    c.attn_concat.assign(LD, 0.0);
    std::vector<double> scores(static_cast<size_t>(L));
    for (int h = 0; h < H; ++h) {
      const int off = h * hd;
      for (int i = 0; i < L; ++i) {
        const double* qi = c.q.data() + static_cast<size_t>(i) * static_cast<size_t>(D) + off;
        double max_s = -1e300;
        for (int j = 0; j < L; ++j) {
          if (source_mask[static_cast<size_t>(j)] == 0) continue;
          const double* kj = c.k.data() + static_cast<size_t>(j) * static_cast<size_t>(D) + off;
          double s = 0.0;
          for (int d = 0; d < hd; ++d) s += qi[d] * kj[d];
          s *= scale;
          scores[static_cast<size_t>(j)] = s;
          if (s > max_s) max_s = s;
        }
        double denom = 0.0;
        double* arow = c.attn_weights.data() +
                       (static_cast<size_t>(h) * static_cast<size_t>(L) + static_cast<size_t>(i)) *
                           static_cast<size_t>(L);
        for (int j = 0; j < L; ++j) {
          if (source_mask[static_cast<size_t>(j)] == 0) continue;
          const double e = std::exp(scores[static_cast<size_t>(j)] - max_s);
          arow[j] = e;
          denom += e;
        }
        double* out = c.attn_concat.data() + static_cast<size_t>(i) * static_cast<size_t>(D) + off;
        for (int j = 0; j < L; ++j) {
          if (source_mask[static_cast<size_t>(j)] == 0) continue;
          const double a = arow[j] / denom;
          arow[j] = a;
          const double* vj = c.v.data() + static_cast<size_t>(j) * static_cast<size_t>(D) + off;
          for (int d = 0; d < hd; ++d) out[d] += a * vj[d];
        }
      }
    }

    c.attn_proj.resize(LD);
    matmul(c.attn_concat.data(), params.view(Params::layer_name(l, "attn_wo")).data(),
           c.attn_proj.data(), L, D, D);
    if (drop) {
      c.drop_mask1.resize(LD);
      for (size_t i = 0; i < LD; ++i) {
        c.drop_mask1[i] = dropout_rng->next_uniform() < cfg.dropout_rate ? 0.0 : keep_scale;
        c.attn_proj[i] *= c.drop_mask1[i];
      }
    } else {
      c.drop_mask1.clear();
    }

    std::vector<double> res1(LD);
    for (size_t i = 0; i < LD; ++i) res1[i] = c.input[i] + c.attn_proj[i];

    c.ln1_xhat.resize(LD);
    c.ln1_inv_std.resize(static_cast<size_t>(L));
    c.ln1_out.resize(LD);
    {
      auto s1 = params.view(Params::layer_name(l, "ln1_scale"));
      auto o1 = params.view(Params::layer_name(l, "ln1_offset"));
      for (int i = 0; i < L; ++i) {
        const size_t base = static_cast<size_t>(i) * static_cast<size_t>(D);
        layer_norm_row(res1.data() + base, s1.data(), o1.data(), D, c.ln1_xhat.data() + base,
                       &c.ln1_inv_std[static_cast<size_t>(i)], c.ln1_out.data() + base);
      }
    }

    c.ffn_pre.resize(static_cast<size_t>(L) * static_cast<size_t>(F));
    matmul(c.ln1_out.data(), params.view(Params::layer_name(l, "ffn_w1")).data(), c.ffn_pre.data(),
           L, D, F);
    {
      auto b1 = params.view(Params::layer_name(l, "ffn_b1"));
      for (int i = 0; i < L; ++i) {
        double* row = c.ffn_pre.data() + static_cast<size_t>(i) * static_cast<size_t>(F);
        for (int f = 0; f < F; ++f) row[f] += b1[static_cast<size_t>(f)];
      }
    }
    c.ffn_act.resize(c.ffn_pre.size());
    for (size_t i = 0; i < c.ffn_pre.size(); ++i) c.ffn_act[i] = gelu(c.ffn_pre[i]);

    c.ffn_out.resize(LD);
    matmul(c.ffn_act.data(), params.view(Params::layer_name(l, "ffn_w2")).data(), c.ffn_out.data(),
           L, F, D);
    {
      auto b2 = params.view(Params::layer_name(l, "ffn_b2"));
      for (int i = 0; i < L; ++i) {
        double* row = c.ffn_out.data() + static_cast<size_t>(i) * static_cast<size_t>(D);
        for (int d = 0; d < D; ++d) row[d] += b2[static_cast<size_t>(d)];
      }
    }
    if (drop) {
      c.drop_mask2.resize(LD);
      for (size_t i = 0; i < LD; ++i) {
        c.drop_mask2[i] = dropout_rng->next_uniform() < cfg.dropout_rate ? 0.0 : keep_scale;
        c.ffn_out[i] *= c.drop_mask2[i];
      }
    } else {
      c.drop_mask2.clear();
    }

    std::vector<double> res2(LD);
    for (size_t i = 0; i < LD; ++i) res2[i] = c.ln1_out[i] + c.ffn_out[i];

    c.ln2_xhat.resize(LD);
    c.ln2_inv_std.resize(static_cast<size_t>(L));
    x.resize(LD);
    {
      auto s2 = params.view(Params::layer_name(l, "ln2_scale"));
      auto o2 = params.view(Params::layer_name(l, "ln2_offset"));
      for (int i = 0; i < L; ++i) {
        const size_t base = static_cast<size_t>(i) * static_cast<size_t>(D);
        layer_norm_row(res2.data() + base, s2.data(), o2.data(), D, c.ln2_xhat.data() + base,
                       &c.ln2_inv_std[static_cast<size_t>(i)], x.data() + base);
      }
    }
  }

  cache.hidden = x;

  SpanLogits logits;
  logits.start_logits.assign(static_cast<size_t>(L), kMaskedLogit);
  logits.end_logits.assign(static_cast<size_t>(L), kMaskedLogit);
  {
    auto hw = params.view("head_w");
    auto hb = params.view("head_b");
    for (int i = 0; i < L; ++i) {
      if (source_mask[static_cast<size_t>(i)] == 0) continue;
      const double* hi = cache.hidden.data() + static_cast<size_t>(i) * static_cast<size_t>(D);
      double s = hb[0], e = hb[1];
      for (int d = 0; d < D; ++d) {
        s += hi[d] * hw[static_cast<size_t>(d) * 2];
        e += hi[d] * hw[static_cast<size_t>(d) * 2 + 1];
      }
      logits.start_logits[static_cast<size_t>(i)] = s;
      logits.end_logits[static_cast<size_t>(i)] = e;
    }
  }
  return logits;
}

SpanLogits forward(const Params& params, std::span<const int> source_ids,
                   std::span<const int> source_mask) {
  ForwardCache cache;
  return forward_cached(params, source_ids, source_mask, cache, nullptr);
}

std::vector<SpanLogits> forward_batch(const Params& params,
                                      const std::vector<TokenizedExample>& batch) {
  std::vector<SpanLogits> out;
  out.reserve(batch.size());
  ForwardCache cache;
  for (const auto& ex : batch) {
    out.push_back(forward_cached(params, ex.source_ids, ex.source_mask, cache, nullptr));
  }
  return out;
}

void backward(const Params& params, const ForwardCache& cache, const SpanLogits& dlogits,
              std::vector<double>& grad) {
  const ModelConfig& cfg = params.config();
  const int L = static_cast<int>(cache.ids.size());
  const int D = cfg.model_dim;
  const int H = cfg.num_heads;
  const int hd = cfg.head_dim();
  const int F = cfg.ffn_dim;
  const size_t LD = static_cast<size_t>(L) * static_cast<size_t>(D);

  if (grad.empty()) grad.assign(params.total_size(), 0.0);
  if (grad.size() != params.total_size()) {
    raise("ShapeMismatch", "gradient buffer size does not match parameter count");
  }
  if (dlogits.start_logits.size() != static_cast<size_t>(L) ||
      dlogits.end_logits.size() != static_cast<size_t>(L)) {
    raise("ShapeMismatch", "dlogits length does not match sequence length");
  }

  // Gradient views share Params' segment layout.
  auto gview = [&](const std::string& name) -> double* {
    for (const auto& seg : params.segments()) {
      if (seg.name == name) return grad.data() + seg.offset;
    }
    raise("Internal", "unknown parameter segment: " + name);
  };

  // Head backward.
  std::vector<double> dx(LD, 0.0);
  {
    auto hw = params.view("head_w");
    double* dhw = gview("head_w");
    double* dhb = gview("head_b");
    for (int i = 0; i < L; ++i) {
      const double ds = dlogits.start_logits[static_cast<size_t>(i)];
      const double de = dlogits.end_logits[static_cast<size_t>(i)];
      if (ds == 0.0 && de == 0.0) continue;
      const double* hi = cache.hidden.data() + static_cast<size_t>(i) * static_cast<size_t>(D);
      double* dxi = dx.data() + static_cast<size_t>(i) * static_cast<size_t>(D);
      dhb[0] += ds;
      dhb[1] += de;
      for (int d = 0; d < D; ++d) {
        dhw[static_cast<size_t>(d) * 2] += hi[d] * ds;
        dhw[static_cast<size_t>(d) * 2 + 1] += hi[d] * de;
        dxi[d] += hw[static_cast<size_t>(d) * 2] * ds + hw[static_cast<size_t>(d) * 2 + 1] * de;
      }
    }
  }

  std::vector<double> dxhat_scratch;
  std::vector<double> dres(LD), dln1(LD), dtmp(LD);
  std::vector<double> dpre(static_cast<size_t>(L) * static_cast<size_t>(F));
  std::vector<double> dact(dpre.size());
  std::vector<double> dconcat(LD), dq(LD), dk(LD), dv(LD);
  std::vector<double> da(static_cast<size_t>(L));

  for (int l = cfg.num_layers - 1; l >= 0; --l) {
    const auto& c = cache.layers[static_cast<size_t>(l)];

    // ln2 backward: dx is the gradient at this layer's output.
    {
      auto s2 = params.view(Params::layer_name(l, "ln2_scale"));
      double* dscale = gview(Params::layer_name(l, "ln2_scale"));
      double* doffset = gview(Params::layer_name(l, "ln2_offset"));
      for (int i = 0; i < L; ++i) {
        const size_t base = static_cast<size_t>(i) * static_cast<size_t>(D);
        layer_norm_backward_row(dx.data() + base, s2.data(), c.ln2_xhat.data() + base,
                                c.ln2_inv_std[static_cast<size_t>(i)], D, dscale, doffset,
                                dres.data() + base, dxhat_scratch);
      }
    }

    // res2 = ln1_out + dropout(ffn_out): dres feeds both branches.
    std::copy(dres.begin(), dres.end(), dln1.begin());

    // FFN backward (through dropout mask 2).
    std::copy(dres.begin(), dres.end(), dtmp.begin());
    if (!c.drop_mask2.empty()) {
      for (size_t i = 0; i < LD; ++i) dtmp[i] *= c.drop_mask2[i];
    }
    {
      double* db2 = gview(Params::layer_name(l, "ffn_b2"));
      for (int i = 0; i < L; ++i) {
        const double* row = dtmp.data() + static_cast<size_t>(i) * static_cast<size_t>(D);
        for (int d = 0; d < D; ++d) db2[d] += row[d];
      }
      matmul_grad_w(c.ffn_act.data(), dtmp.data(), gview(Params::layer_name(l, "ffn_w2")), L, F, D);
      std::fill(dact.begin(), dact.end(), 0.0);
      matmul_grad_x(dtmp.data(), params.view(Params::layer_name(l, "ffn_w2")).data(), dact.data(),
                    L, F, D);
      for (size_t i = 0; i < dpre.size(); ++i) dpre[i] = dact[i] * gelu_grad(c.ffn_pre[i]);
      double* db1 = gview(Params::layer_name(l, "ffn_b1"));
      for (int i = 0; i < L; ++i) {
        const double* row = dpre.data() + static_cast<size_t>(i) * static_cast<size_t>(F);
        for (int f = 0; f < F; ++f) db1[f] += row[f];
      }
      matmul_grad_w(c.ln1_out.data(), dpre.data(), gview(Params::layer_name(l, "ffn_w1")), L, D, F);
      matmul_grad_x(dpre.data(), params.view(Params::layer_name(l, "ffn_w1")).data(), dln1.data(),
                    L, D, F);
    }

    // ln1 backward.
    {
      auto s1 = params.view(Params::layer_name(l, "ln1_scale"));
      double* dscale = gview(Params::layer_name(l, "ln1_scale"));
      double* doffset = gview(Params::layer_name(l, "ln1_offset"));
      for (int i = 0; i < L; ++i) {
        const size_t base = static_cast<size_t>(i) * static_cast<size_t>(D);
        layer_norm_backward_row(dln1.data() + base, s1.data(), c.ln1_xhat.data() + base,
                                c.ln1_inv_std[static_cast<size_t>(i)], D, dscale, doffset,
                                dres.data() + base, dxhat_scratch);
      }
    }

    // res1 = input + dropout(attn_proj): dres feeds both branches.
    std::copy(dres.begin(), dres.end(), dx.begin());  // dx now accumulates d(input)
    std::copy(dres.begin(), dres.end(), dtmp.begin());
    if (!c.drop_mask1.empty()) {
      for (size_t i = 0; i < LD; ++i) dtmp[i] *= c.drop_mask1[i];
    }

    // Output projection backward.
    matmul_grad_w(c.attn_concat.data(), dtmp.data(), gview(Params::layer_name(l, "attn_wo")), L, D, D);
    std::fill(dconcat.begin(), dconcat.end(), 0.0);
    matmul_grad_x(dtmp.data(), params.view(Params::layer_name(l, "attn_wo")).data(), dconcat.data(),
                  L, D, D);

    // Attention backward.
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
    std::fill(dq.begin(), dq.end(), 0.0);
    std::fill(dk.begin(), dk.end(), 0.0);
    std::fill(dv.begin(), dv.end(), 0.0);
    for (int h = 0; h < H; ++h) {
      const int off = h * hd;
      for (int i = 0; i < L; ++i) {
        const double* dout = dconcat.data() + static_cast<size_t>(i) * static_cast<size_t>(D) + off;
        const double* arow = c.attn_weights.data() +
                             (static_cast<size_t>(h) * static_cast<size_t>(L) +
                              static_cast<size_t>(i)) * static_cast<size_t>(L);
        double sum_ada = 0.0;
        for (int j = 0; j < L; ++j) {
          if (cache.mask[static_cast<size_t>(j)] == 0) continue;
          const double* vj = c.v.data() + static_cast<size_t>(j) * static_cast<size_t>(D) + off;
          double acc = 0.0;
          for (int d = 0; d < hd; ++d) acc += dout[d] * vj[d];
          da[static_cast<size_t>(j)] = acc;
          sum_ada += arow[j] * acc;
          double* dvj = dv.data() + static_cast<size_t>(j) * static_cast<size_t>(D) + off;
          for (int d = 0; d < hd; ++d) dvj[d] += arow[j] * dout[d];
        }
        const double* qi = c.q.data() + static_cast<size_t>(i) * static_cast<size_t>(D) + off;
        double* dqi = dq.data() + static_cast<size_t>(i) * static_cast<size_t>(D) + off;
        for (int j = 0; j < L; ++j) {
          if (cache.mask[static_cast<size_t>(j)] == 0) continue;
          const double ds = arow[j] * (da[static_cast<size_t>(j)] - sum_ada) * scale;
          if (ds == 0.0) continue;
          const double* kj = c.k.data() + static_cast<size_t>(j) * static_cast<size_t>(D) + off;
          double* dkj = dk.data() + static_cast<size_t>(j) * static_cast<size_t>(D) + off;
          for (int d = 0; d < hd; ++d) {
            dqi[d] += ds * kj[d];
            dkj[d] += ds * qi[d];
          }
        }
      }
    }

    matmul_grad_w(c.input.data(), dq.data(), gview(Params::layer_name(l, "attn_wq")), L, D, D);
    matmul_grad_w(c.input.data(), dk.data(), gview(Params::layer_name(l, "attn_wk")), L, D, D);
    matmul_grad_w(c.input.data(), dv.data(), gview(Params::layer_name(l, "attn_wv")), L, D, D);
    matmul_grad_x(dq.data(), params.view(Params::layer_name(l, "attn_wq")).data(), dx.data(), L, D, D);
    matmul_grad_x(dk.data(), params.view(Params::layer_name(l, "attn_wk")).data(), dx.data(), L, D, D);
    matmul_grad_x(dv.data(), params.view(Params::layer_name(l, "attn_wv")).data(), dx.data(), L, D, D);
  }

  // Embedding scatter.
  {
    double* dtok = gview("token_embedding");
    double* dpos = gview("position_embedding");
    for (int i = 0; i < L; ++i) {
      const double* dxi = dx.data() + static_cast<size_t>(i) * static_cast<size_t>(D);
      double* dt = dtok + static_cast<size_t>(cache.ids[static_cast<size_t>(i)]) *
                              static_cast<size_t>(D);
      double* dp = dpos + static_cast<size_t>(i) * static_cast<size_t>(D);
      for (int d = 0; d < D; ++d) {
        dt[d] += dxi[d];
        dp[d] += dxi[d];
      }
    }
  }
}

void save_checkpoint(const Params& params, const std::string& path) {
  nlohmann::json j;
  j["format"] = "sentspan-checkpoint-v1";
  const ModelConfig& c = params.config();
  j["config"] = {{"vocab_size", c.vocab_size},
                 {"model_dim", c.model_dim},
                 {"num_heads", c.num_heads},
                 {"num_layers", c.num_layers},
                 {"ffn_dim", c.ffn_dim},
                 {"max_source_length", c.max_source_length},
                 {"dropout_rate", c.dropout_rate},
                 {"seed", c.seed}};
  nlohmann::json segs = nlohmann::json::array();
  for (const auto& seg : params.segments()) {
    nlohmann::json js;
    js["name"] = seg.name;
    js["shape"] = seg.shape;
    js["data"] = std::vector<double>(params.data().begin() + static_cast<long>(seg.offset),
                                     params.data().begin() + static_cast<long>(seg.offset + seg.size));
    segs.push_back(std::move(js));
  }
  j["segments"] = std::move(segs);
  std::ofstream f(path, std::ios::binary);
  if (!f) raise("IoError", "cannot write checkpoint: " + path);
  f << j.dump() << '\n';
}

Params load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) raise("IoError", "cannot read checkpoint: " + path);
  nlohmann::json j = nlohmann::json::parse(f, nullptr, false);
  if (j.is_discarded() || !j.is_object()) raise("ParseError", "checkpoint is not valid JSON: " + path);
  try {
    if (j.at("format").get<std::string>() != "sentspan-checkpoint-v1") {
      raise("ParseError", "unknown checkpoint format in " + path);
    }
    const auto& jc = j.at("config");
    ModelConfig cfg;
    cfg.vocab_size = jc.at("vocab_size").get<int>();
    cfg.model_dim = jc.at("model_dim").get<int>();
    cfg.num_heads = jc.at("num_heads").get<int>();
    cfg.num_layers = jc.at("num_layers").get<int>();
    cfg.ffn_dim = jc.at("ffn_dim").get<int>();
    cfg.max_source_length = jc.at("max_source_length").get<int>();
    cfg.dropout_rate = jc.at("dropout_rate").get<double>();
    cfg.seed = jc.at("seed").get<uint64_t>();
    Params p(cfg);
    const auto& segs = j.at("segments");
    if (!segs.is_array() || segs.size() != p.segments().size()) {
      raise("ShapeMismatch", "checkpoint segment count does not match config: " + path);
    }
    for (size_t s = 0; s < p.segments().size(); ++s) {
      const auto& expect = p.segments()[s];
      const auto& js = segs[s];
      if (js.at("name").get<std::string>() != expect.name ||
          js.at("shape").get<std::vector<int>>() != expect.shape) {
        raise("ShapeMismatch", "checkpoint segment '" + expect.name + "' mismatched in " + path);
      }
      auto values = js.at("data").get<std::vector<double>>();
      if (values.size() != expect.size) {
        raise("ShapeMismatch", "checkpoint segment '" + expect.name + "' has wrong length in " + path);
      }
      std::copy(values.begin(), values.end(), p.data().begin() + static_cast<long>(expect.offset));
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    raise("ParseError", std::string("checkpoint field error: ") + e.what() + " in " + path);
  }
}

Params load_checkpoint_checked(const std::string& path, const ModelConfig& expected) {
  Params p = load_checkpoint(path);
  const ModelConfig& c = p.config();
  if (c.vocab_size != expected.vocab_size || c.model_dim != expected.model_dim ||
      c.num_heads != expected.num_heads || c.num_layers != expected.num_layers ||
      c.ffn_dim != expected.ffn_dim || c.max_source_length != expected.max_source_length) {
    raise("ShapeMismatch", "checkpoint config disagrees with the requested model shape: " + path);
  }
  return p;
}

}  // namespace sentspan
