#include "flnet/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "flnet/kernels.hpp"

namespace flnet::ad {

std::string Shape::str() const {
  return "(" + std::to_string(b) + "," + std::to_string(c) + "," + std::to_string(h) +
         "," + std::to_string(w) + ")";
}

namespace {

template <typename T>
std::shared_ptr<Node<T>> make_node(Shape s, std::vector<std::shared_ptr<Node<T>>> inputs) {
  auto n = std::make_shared<Node<T>>();
  n->shape = s;
  n->val.assign(s.numel(), T(0));
  for (const auto& in : inputs) n->requires_grad |= in->requires_grad;
  n->inputs = std::move(inputs);
  return n;
}

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (!(a.shape() == b.shape()))
    fail(ErrorCode::usage, std::string(op) + ": shape mismatch " + a.shape().str() +
                               " vs " + b.shape().str());
}

}  // namespace

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape s, bool requires_grad) {
  auto n = make_node<T>(s, {});
  n->requires_grad = requires_grad;
  return Tensor<T>(n);
}

template <typename T>
Tensor<T> Tensor<T>::from(Shape s, std::vector<T> values, bool requires_grad) {
  if (values.size() != s.numel())
    fail(ErrorCode::usage, "Tensor::from: value count does not match shape");
  auto n = make_node<T>(s, {});
  n->val = std::move(values);
  n->requires_grad = requires_grad;
  return Tensor<T>(n);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T v) {
  return from({1, 1, 1, 1}, {v});
}

template <typename T>
void backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.shape().numel() != 1)
    fail(ErrorCode::usage, "backward: loss must be a defined scalar");

  // Iterative postorder DFS over grad-requiring nodes; the reversed order is
  // topological with consumers ahead of producers.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, size_t>> stack;
  if (loss.node->requires_grad) stack.push_back({loss.node.get(), 0});
  seen.insert(loss.node.get());
  while (!stack.empty()) {
    auto& [n, idx] = stack.back();
    bool descended = false;
    while (idx < n->inputs.size()) {
      Node<T>* in = n->inputs[idx++].get();
      if (in->requires_grad && seen.insert(in).second) {
        stack.push_back({in, 0});
        descended = true;
        break;
      }
    }
    if (descended) continue;
    order.push_back(n);
    stack.pop_back();
  }

  for (Node<T>* n : order) n->ensure_grad();
  loss.node->grad[0] = T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backprop) (*it)->backprop();
}

// --------------------------------------------------------------------- conv

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 int padding, int stride) {
  const Shape xs = x.shape(), ws = weight.shape();
  if (ws.h != ws.w || ws.h % 2 == 0)
    fail(ErrorCode::usage, "conv2d: kernel must be square and odd");
  if (ws.c != xs.c)
    fail(ErrorCode::usage, "conv2d: weight input channels " + std::to_string(ws.c) +
                               " do not match input " + std::to_string(xs.c));
  if (bias.defined() && int(bias.shape().numel()) != ws.b)
    fail(ErrorCode::usage, "conv2d: bias size does not match output channels");
  if (stride < 1 || padding < 0) fail(ErrorCode::usage, "conv2d: bad stride/padding");

  kern::Conv2dShape cs{xs.b, xs.c, xs.h, xs.w, ws.b, ws.h, padding, stride};
  if (cs.hout() <= 0 || cs.wout() <= 0)
    fail(ErrorCode::usage, "conv2d: output would be empty");

  std::vector<std::shared_ptr<Node<T>>> inputs{x.node, weight.node};
  if (bias.defined()) inputs.push_back(bias.node);
  auto out = make_node<T>({xs.b, ws.b, cs.hout(), cs.wout()}, std::move(inputs));
  kern::conv2d_forward<T>(cs, x.node->val.data(), weight.node->val.data(),
                          bias.defined() ? bias.node->val.data() : nullptr,
                          out->val.data());

  Node<T>* o = out.get();
  Node<T>* xn = x.node.get();
  Node<T>* wn = weight.node.get();
  Node<T>* bn = bias.defined() ? bias.node.get() : nullptr;
  out->backprop = [o, xn, wn, bn, cs]() {
    if (xn->requires_grad) {
      xn->ensure_grad();
      kern::conv2d_backward_input<T>(cs, o->grad.data(), wn->val.data(),
                                     xn->grad.data());
    }
    if (wn->requires_grad) {
      wn->ensure_grad();
      T* db = nullptr;
      if (bn && bn->requires_grad) {
        bn->ensure_grad();
        db = bn->grad.data();
      }
      kern::conv2d_backward_weight<T>(cs, o->grad.data(), xn->val.data(),
                                      wn->grad.data(), db);
    }
  };
  return Tensor<T>(out);
}

// --------------------------------------------------------------- pointwise

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  auto out = make_node<T>(x.shape(), {x.node});
  const auto& v = x.node->val;
  for (size_t i = 0; i < v.size(); ++i) out->val[i] = v[i] > T(0) ? v[i] : T(0);
  Node<T>* o = out.get();
  Node<T>* xn = x.node.get();
  out->backprop = [o, xn]() {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    for (size_t i = 0; i < o->grad.size(); ++i)
      if (xn->val[i] > T(0)) xn->grad[i] += o->grad[i];
  };
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  const Shape as = a.shape(), bs = b.shape();
  const bool broadcast = bs.b == 1 && as.b != 1;
  if (!broadcast)
    check_same_shape(a, b, "add");
  else if (bs.c != as.c || bs.h != as.h || bs.w != as.w)
    fail(ErrorCode::usage, "add: incompatible broadcast shapes");

  auto out = make_node<T>(as, {a.node, b.node});
  const size_t per = bs.numel();
  for (size_t i = 0; i < out->val.size(); ++i)
    out->val[i] = a.node->val[i] + b.node->val[broadcast ? i % per : i];
  Node<T>* o = out.get();
  Node<T>* an = a.node.get();
  Node<T>* bn = b.node.get();
  out->backprop = [o, an, bn, broadcast, per]() {
    if (an->requires_grad) {
      an->ensure_grad();
      for (size_t i = 0; i < o->grad.size(); ++i) an->grad[i] += o->grad[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      if (!broadcast) {
        for (size_t i = 0; i < o->grad.size(); ++i) bn->grad[i] += o->grad[i];
      } else {
        for (size_t i = 0; i < o->grad.size(); ++i) bn->grad[i % per] += o->grad[i];
      }
    }
  };
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  auto out = make_node<T>(x.shape(), {x.node});
  for (size_t i = 0; i < out->val.size(); ++i) out->val[i] = factor * x.node->val[i];
  Node<T>* o = out.get();
  Node<T>* xn = x.node.get();
  out->backprop = [o, xn, factor]() {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    for (size_t i = 0; i < o->grad.size(); ++i) xn->grad[i] += factor * o->grad[i];
  };
  return Tensor<T>(out);
}

// ------------------------------------------------------------ rearrangement

template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& x, int r) {
  const Shape s = x.shape();
  if (r < 1 || s.c % (r * r) != 0)
    fail(ErrorCode::usage, "pixel_shuffle: channels not divisible by r^2");
  const int oc = s.c / (r * r);
  const Shape os{s.b, oc, s.h * r, s.w * r};
  auto out = make_node<T>(os, {x.node});

  auto map_index = [s, os, r, oc](size_t oi) {
    // oi decomposed over (b, c, oh, ow); source channel c*r^2 + dy*r + dx.
    const int ow = int(oi % size_t(os.w));
    size_t t = oi / size_t(os.w);
    const int oh = int(t % size_t(os.h));
    t /= size_t(os.h);
    const int c = int(t % size_t(oc));
    const int b = int(t / size_t(oc));
    const int ih = oh / r, dy = oh % r;
    const int iw = ow / r, dx = ow % r;
    const int ic = (c * r + dy) * r + dx;
    return ((size_t(b) * s.c + ic) * s.h + ih) * s.w + iw;
  };
  for (size_t oi = 0; oi < out->val.size(); ++oi)
    out->val[oi] = x.node->val[map_index(oi)];
  Node<T>* o = out.get();
  Node<T>* xn = x.node.get();
  out->backprop = [o, xn, map_index]() {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    for (size_t oi = 0; oi < o->grad.size(); ++oi)
      xn->grad[map_index(oi)] += o->grad[oi];
  };
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> max_pool2d(const Tensor<T>& x) {
  const Shape s = x.shape();
  if (s.h % 2 || s.w % 2) fail(ErrorCode::usage, "max_pool2d: odd spatial dims");
  const Shape os{s.b, s.c, s.h / 2, s.w / 2};
  auto out = make_node<T>(os, {x.node});
  auto argmax = std::make_shared<std::vector<uint32_t>>(os.numel());
  const auto& v = x.node->val;
  size_t oi = 0;
  for (int b = 0; b < s.b; ++b)
    for (int c = 0; c < s.c; ++c) {
      const size_t plane = (size_t(b) * s.c + c) * s.h * s.w;
      for (int oh = 0; oh < os.h; ++oh)
        for (int ow = 0; ow < os.w; ++ow, ++oi) {
          size_t best = plane + size_t(2 * oh) * s.w + 2 * ow;
          T bv = v[best];
          for (int j = 0; j < 2; ++j)
            for (int i = 0; i < 2; ++i) {
              const size_t idx = plane + size_t(2 * oh + j) * s.w + (2 * ow + i);
              if (v[idx] > bv) {
                bv = v[idx];
                best = idx;
              }
            }
          out->val[oi] = bv;
          (*argmax)[oi] = uint32_t(best);
        }
    }
  Node<T>* o = out.get();
  Node<T>* xn = x.node.get();
  out->backprop = [o, xn, argmax]() {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    for (size_t i = 0; i < o->grad.size(); ++i)
      xn->grad[(*argmax)[i]] += o->grad[i];
  };
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> upsample_nearest2(const Tensor<T>& x) {
  const Shape s = x.shape();
  const Shape os{s.b, s.c, s.h * 2, s.w * 2};
  auto out = make_node<T>(os, {x.node});
  const auto& v = x.node->val;
  for (int bc = 0; bc < s.b * s.c; ++bc) {
    const size_t ip = size_t(bc) * s.h * s.w;
    const size_t op = size_t(bc) * os.h * os.w;
    for (int h = 0; h < s.h; ++h)
      for (int w = 0; w < s.w; ++w) {
        const T val = v[ip + size_t(h) * s.w + w];
        for (int j = 0; j < 2; ++j)
          for (int i = 0; i < 2; ++i)
            out->val[op + size_t(2 * h + j) * os.w + (2 * w + i)] = val;
      }
  }
  Node<T>* o = out.get();
  Node<T>* xn = x.node.get();
  out->backprop = [o, xn, s, os]() {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    for (int bc = 0; bc < s.b * s.c; ++bc) {
      const size_t ip = size_t(bc) * s.h * s.w;
      const size_t op = size_t(bc) * os.h * os.w;
      for (int h = 0; h < s.h; ++h)
        for (int w = 0; w < s.w; ++w) {
          T acc = T(0);
          for (int j = 0; j < 2; ++j)
            for (int i = 0; i < 2; ++i)
              acc += o->grad[op + size_t(2 * h + j) * os.w + (2 * w + i)];
          xn->grad[ip + size_t(h) * s.w + w] += acc;
        }
    }
  };
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  const Shape as = a.shape(), bs = b.shape();
  if (as.b != bs.b || as.h != bs.h || as.w != bs.w)
    fail(ErrorCode::usage, "concat_channels: spatial/batch mismatch");
  const Shape os{as.b, as.c + bs.c, as.h, as.w};
  auto out = make_node<T>(os, {a.node, b.node});
  const size_t plane = size_t(as.h) * as.w;
  for (int n = 0; n < as.b; ++n) {
    std::copy_n(a.node->val.data() + size_t(n) * as.c * plane, size_t(as.c) * plane,
                out->val.data() + size_t(n) * os.c * plane);
    std::copy_n(b.node->val.data() + size_t(n) * bs.c * plane, size_t(bs.c) * plane,
                out->val.data() + size_t(n) * os.c * plane + size_t(as.c) * plane);
  }
  Node<T>* o = out.get();
  Node<T>* an = a.node.get();
  Node<T>* bn = b.node.get();
  out->backprop = [o, an, bn, as, bs, os, plane]() {
    for (int n = 0; n < as.b; ++n) {
      const T* g = o->grad.data() + size_t(n) * os.c * plane;
      if (an->requires_grad) {
        an->ensure_grad();
        T* ga = an->grad.data() + size_t(n) * as.c * plane;
        for (size_t i = 0; i < size_t(as.c) * plane; ++i) ga[i] += g[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        T* gb = bn->grad.data() + size_t(n) * bs.c * plane;
        const T* gs = g + size_t(as.c) * plane;
        for (size_t i = 0; i < size_t(bs.c) * plane; ++i) gb[i] += gs[i];
      }
    }
  };
  return Tensor<T>(out);
}

// -------------------------------------------------------------------- losses

template <typename T>
Tensor<T> l1_loss(const Tensor<T>& pred, const std::vector<T>& target,
                  const std::vector<uint8_t>& invalid_mask) {
  const size_t n = pred.shape().numel();
  if (target.size() != n) fail(ErrorCode::usage, "l1_loss: target size mismatch");
  if (!invalid_mask.empty() && invalid_mask.size() != n)
    fail(ErrorCode::usage, "l1_loss: mask size mismatch");

  size_t n_valid = 0;
  double sum = 0.0;
  const auto& v = pred.node->val;
  for (size_t i = 0; i < n; ++i) {
    if (!invalid_mask.empty() && invalid_mask[i]) continue;
    sum += std::abs(double(v[i]) - double(target[i]));
    ++n_valid;
  }
  if (n_valid == 0) fail(ErrorCode::usage, "l1_loss: zero valid pixels");

  auto out = make_node<T>({1, 1, 1, 1}, {pred.node});
  out->val[0] = T(sum / double(n_valid));
  Node<T>* o = out.get();
  Node<T>* pn = pred.node.get();
  auto tgt = std::make_shared<std::vector<T>>(target);
  auto msk = std::make_shared<std::vector<uint8_t>>(invalid_mask);
  out->backprop = [o, pn, tgt, msk, n_valid]() {
    if (!pn->requires_grad) return;
    pn->ensure_grad();
    const T g = o->grad[0] / T(n_valid);
    for (size_t i = 0; i < pn->val.size(); ++i) {
      if (!msk->empty() && (*msk)[i]) continue;
      const T d = pn->val[i] - (*tgt)[i];
      if (d > T(0))
        pn->grad[i] += g;
      else if (d < T(0))
        pn->grad[i] -= g;
    }
  };
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> cross_entropy_loss(const Tensor<T>& logits, const std::vector<int32_t>& labels,
                             const std::optional<std::array<T, 3>>& class_weights,
                             std::optional<T> focal_gamma,
                             const std::vector<uint8_t>& invalid_mask) {
  const Shape s = logits.shape();
  const int C = s.c;
  if (C != 3) fail(ErrorCode::usage, "cross_entropy_loss: expected 3 classes");
  const size_t npx = size_t(s.b) * s.h * s.w;
  if (labels.size() != npx) fail(ErrorCode::usage, "cross_entropy_loss: label size mismatch");
  if (!invalid_mask.empty() && invalid_mask.size() != npx)
    fail(ErrorCode::usage, "cross_entropy_loss: mask size mismatch");

  const size_t plane = size_t(s.h) * s.w;
  auto probs = std::make_shared<std::vector<T>>(size_t(s.b) * C * plane);
  const auto& v = logits.node->val;

  double loss_sum = 0.0, weight_sum = 0.0;
  for (int b = 0; b < s.b; ++b)
    for (size_t p = 0; p < plane; ++p) {
      const size_t px = size_t(b) * plane + p;
      if (!invalid_mask.empty() && invalid_mask[px]) continue;
      const int32_t lab = labels[px];
      if (lab < 0 || lab >= C)
        fail(ErrorCode::usage, "cross_entropy_loss: label outside {0,1,2} at a valid pixel");
      const size_t base = size_t(b) * C * plane + p;
      T mx = v[base];
      for (int c = 1; c < C; ++c) mx = std::max(mx, v[base + size_t(c) * plane]);
      double lse = 0.0;
      for (int c = 0; c < C; ++c) lse += std::exp(double(v[base + size_t(c) * plane] - mx));
      lse = double(mx) + std::log(lse);
      for (int c = 0; c < C; ++c)
        (*probs)[base + size_t(c) * plane] =
            T(std::exp(double(v[base + size_t(c) * plane]) - lse));
      const double logp = double(v[base + size_t(lab) * plane]) - lse;
      const double w = class_weights ? double((*class_weights)[size_t(lab)]) : 1.0;
      double li = -w * logp;
      if (focal_gamma)
        li *= std::pow(1.0 - double((*probs)[base + size_t(lab) * plane]),
                       double(*focal_gamma));
      loss_sum += li;
      weight_sum += w;
    }
  if (weight_sum <= 0.0) fail(ErrorCode::usage, "cross_entropy_loss: zero valid pixels");

  auto out = make_node<T>({1, 1, 1, 1}, {logits.node});
  out->val[0] = T(loss_sum / weight_sum);
  Node<T>* o = out.get();
  Node<T>* ln = logits.node.get();
  auto labs = std::make_shared<std::vector<int32_t>>(labels);
  auto msk = std::make_shared<std::vector<uint8_t>>(invalid_mask);
  out->backprop = [o, ln, labs, msk, probs, class_weights, focal_gamma, s, C, plane,
                   weight_sum]() {
    if (!ln->requires_grad) return;
    ln->ensure_grad();
    const double g0 = double(o->grad[0]) / weight_sum;
    for (int b = 0; b < s.b; ++b)
      for (size_t p = 0; p < plane; ++p) {
        const size_t px = size_t(b) * plane + p;
        if (!msk->empty() && (*msk)[px]) continue;
        const int32_t lab = (*labs)[px];
        const size_t base = size_t(b) * C * plane + p;
        const double w = class_weights ? double((*class_weights)[size_t(lab)]) : 1.0;
        const double u = double((*probs)[base + size_t(lab) * plane]);
        for (int c = 0; c < C; ++c) {
          const double pc = double((*probs)[base + size_t(c) * plane]);
          const double ind = c == lab ? 1.0 : 0.0;
          double d;
          if (focal_gamma) {
            const double gmm = double(*focal_gamma);
            const double one_u = 1.0 - u;
            // d/dz of -w (1-u)^g log u; the 1/u factor cancels against du/dz.
            d = (w * gmm * std::pow(one_u, gmm - 1.0) * u * std::log(std::max(u, 1e-300)) -
                 w * std::pow(one_u, gmm)) *
                (ind - pc);
          } else {
            d = w * (pc - ind);
          }
          ln->grad[base + size_t(c) * plane] += T(g0 * d);
        }
      }
  };
  return Tensor<T>(out);
}

// ---------------------------------------------------------- instantiations

#define FLNET_INSTANTIATE(T)                                                          \
  template class Tensor<T>;                                                           \
  template void backward<T>(const Tensor<T>&);                                        \
  template Tensor<T> conv2d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, \
                               int, int);                                             \
  template Tensor<T> relu<T>(const Tensor<T>&);                                       \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                      \
  template Tensor<T> scale<T>(const Tensor<T>&, T);                                   \
  template Tensor<T> pixel_shuffle<T>(const Tensor<T>&, int);                         \
  template Tensor<T> max_pool2d<T>(const Tensor<T>&);                                 \
  template Tensor<T> upsample_nearest2<T>(const Tensor<T>&);                          \
  template Tensor<T> concat_channels<T>(const Tensor<T>&, const Tensor<T>&);          \
  template Tensor<T> l1_loss<T>(const Tensor<T>&, const std::vector<T>&,              \
                                const std::vector<uint8_t>&);                         \
  template Tensor<T> cross_entropy_loss<T>(                                           \
      const Tensor<T>&, const std::vector<int32_t>&,                                  \
      const std::optional<std::array<T, 3>>&, std::optional<T>,                       \
      const std::vector<uint8_t>&);

FLNET_INSTANTIATE(float)
FLNET_INSTANTIATE(double)

#undef FLNET_INSTANTIATE

}  // namespace flnet::ad
