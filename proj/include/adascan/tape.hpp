#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "adascan/tensor.hpp"

namespace adascan {

class Tape;

// Handle to a value recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::uint32_t id = 0;

  const Tensor& value() const;
  double item() const;
};

// Per-node adjoints produced by Tape::backward.
class Gradients {
 public:
  const Tensor& wrt(Var v) const {
    require(v.id < adjoints_.size(), "Gradients: node recorded after backward");
    return adjoints_[v.id];
  }

 private:
  friend class Tape;
  explicit Gradients(std::vector<Tensor> adjoints) : adjoints_(std::move(adjoints)) {}
  std::vector<Tensor> adjoints_;
};

// Append-only record of primitive operations. Node ids are topologically
// ordered (inputs precede outputs); the reverse sweep visits each node
// exactly once. A tape is rebuilt per forward pass and is single-threaded;
// independent tapes may run concurrently.
class Tape {
 public:
  using NodeId = std::uint32_t;
  using Backprop = std::function<void(const Tensor& out_adj, std::vector<Tensor>& adjoints)>;

  Var leaf(Tensor value, bool is_param = false) {
    nodes_.push_back(Node{std::move(value), 0, 0, nullptr, is_param});
    return Var{this, static_cast<NodeId>(nodes_.size() - 1)};
  }

  Var record(Tensor value, std::span<const NodeId> inputs) {
    const NodeId id = static_cast<NodeId>(nodes_.size());
    for (NodeId in : inputs) require(in < id, "Tape: inputs must precede outputs");
    const auto offset = static_cast<std::uint32_t>(input_pool_.size());
    input_pool_.insert(input_pool_.end(), inputs.begin(), inputs.end());
    nodes_.push_back(
        Node{std::move(value), offset, static_cast<std::uint32_t>(inputs.size()), nullptr, false});
    return Var{this, id};
  }

  Var record(Tensor value, std::initializer_list<NodeId> inputs) {
    return record(std::move(value), std::span<const NodeId>(inputs.begin(), inputs.size()));
  }

  void set_backprop(NodeId id, Backprop fn) { nodes_[id].backprop = std::move(fn); }

  const Tensor& value(NodeId id) const {
    require(id < nodes_.size(), "Tape: unknown node id");
    return nodes_[id].value;
  }

  std::span<const NodeId> inputs(NodeId id) const {
    require(id < nodes_.size(), "Tape: unknown node id");
    const Node& n = nodes_[id];
    return {input_pool_.data() + n.inputs_offset, n.inputs_count};
  }

  bool is_param(NodeId id) const {
    require(id < nodes_.size(), "Tape: unknown node id");
    return nodes_[id].is_param;
  }

  std::size_t size() const { return nodes_.size(); }

  // Reverse sweep from a scalar output. Fan-out accumulates by summation.
  Gradients backward(Var output) const {
    require(output.tape == this, "backward: output recorded on another tape");
    require(value(output.id).is_scalar(), "backward: output must be scalar");
    std::vector<Tensor> adjoints(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i) adjoints[i] = Tensor(nodes_[i].value.shape());
    adjoints[output.id][0] = 1.0;
    for (std::int64_t id = output.id; id >= 0; --id) {
      const Node& node = nodes_[static_cast<std::size_t>(id)];
      if (node.backprop) node.backprop(adjoints[static_cast<std::size_t>(id)], adjoints);
    }
    return Gradients(std::move(adjoints));
  }

 private:
  struct Node {
    Tensor value;
    std::uint32_t inputs_offset;  // into the shared input pool
    std::uint32_t inputs_count;
    Backprop backprop;  // null for leaves
    bool is_param;
  };

  std::vector<Node> nodes_;
  std::vector<NodeId> input_pool_;
};

inline const Tensor& Var::value() const {
  require(tape != nullptr, "Var: detached handle");
  return tape->value(id);
}

inline double Var::item() const { return value().item(); }

namespace detail {

inline Tape& tape_of(Var a) {
  require(a.tape != nullptr, "tape op: detached operand");
  return *a.tape;
}

inline Tape& same_tape(Var a, Var b) {
  require(a.tape != nullptr && a.tape == b.tape, "tape op: operands on different tapes");
  return *a.tape;
}

inline double stable_sigmoid(double z) {
  if (z >= 0.0) {
    const double e = std::exp(-z);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Primitive operations. Each records its local gradient rule on the tape.
// ---------------------------------------------------------------------------

inline Var add(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require(av.shape() == bv.shape(), "add: shape mismatch");
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  Var o = t.record(std::move(out), {a.id, b.id});
  t.set_backprop(o.id, [aid = a.id, bid = b.id](const Tensor& oa, std::vector<Tensor>& adj) {
    for (std::size_t i = 0; i < oa.size(); ++i) {
      adj[aid][i] += oa[i];
      adj[bid][i] += oa[i];
    }
  });
  return o;
}

inline Var sub(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require(av.shape() == bv.shape(), "sub: shape mismatch");
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  Var o = t.record(std::move(out), {a.id, b.id});
  t.set_backprop(o.id, [aid = a.id, bid = b.id](const Tensor& oa, std::vector<Tensor>& adj) {
    for (std::size_t i = 0; i < oa.size(); ++i) {
      adj[aid][i] += oa[i];
      adj[bid][i] -= oa[i];
    }
  });
  return o;
}

// Multiply by a compile-time-known constant.
inline Var scale(Var a, double c) {
  Tape& t = detail::tape_of(a);
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * av[i];
  Var o = t.record(std::move(out), {a.id});
  t.set_backprop(o.id, [aid = a.id, c](const Tensor& oa, std::vector<Tensor>& adj) {
    for (std::size_t i = 0; i < oa.size(); ++i) adj[aid][i] += c * oa[i];
  });
  return o;
}

// Elementwise product with a constant mask (dropout and friends).
inline Var cmul(Var a, Tensor mask) {
  Tape& t = detail::tape_of(a);
  const Tensor& av = a.value();
  require(av.shape() == mask.shape(), "cmul: shape mismatch");
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * mask[i];
  Var o = t.record(std::move(out), {a.id});
  t.set_backprop(o.id, [aid = a.id, m = std::move(mask)](const Tensor& oa, std::vector<Tensor>& adj) {
    for (std::size_t i = 0; i < oa.size(); ++i) adj[aid][i] += m[i] * oa[i];
  });
  return o;
}

// Scalar node times tensor node.
inline Var smul(Var s, Var v) {
  Tape& t = detail::same_tape(s, v);
  require(s.value().is_scalar(), "smul: first operand must be scalar");
  const double sv = s.value().item();
  const Tensor& vv = v.value();
  Tensor out(vv.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = sv * vv[i];
  Var o = t.record(std::move(out), {s.id, v.id});
  t.set_backprop(o.id, [tp = &t, sid = s.id, vid = v.id](const Tensor& oa, std::vector<Tensor>& adj) {
    const Tensor& vv = tp->value(vid);
    const double sv = tp->value(sid).item();
    double s_acc = 0.0;
    for (std::size_t i = 0; i < oa.size(); ++i) {
      s_acc += oa[i] * vv[i];
      adj[vid][i] += sv * oa[i];
    }
    adj[sid][0] += s_acc;
  });
  return o;
}

// Tensor node divided by a scalar node.
inline Var sdiv(Var v, Var s) {
  Tape& t = detail::same_tape(v, s);
  require(s.value().is_scalar(), "sdiv: divisor must be scalar");
  const double sv = s.value().item();
  require(sv != 0.0, "sdiv: division by zero");
  const Tensor& vv = v.value();
  Tensor out(vv.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = vv[i] / sv;
  Var o = t.record(std::move(out), {v.id, s.id});
  t.set_backprop(o.id, [tp = &t, vid = v.id, sid = s.id](const Tensor& oa, std::vector<Tensor>& adj) {
    const Tensor& vv = tp->value(vid);
    const double sv = tp->value(sid).item();
    double s_acc = 0.0;
    for (std::size_t i = 0; i < oa.size(); ++i) {
      adj[vid][i] += oa[i] / sv;
      s_acc += oa[i] * vv[i];
    }
    adj[sid][0] -= s_acc / (sv * sv);
  });
  return o;
}

inline Var matvec(Var m, Var v) {
  Tape& t = detail::same_tape(m, v);
  const Tensor& mv = m.value();
  const Tensor& vv = v.value();
  require(mv.rank() == 2 && vv.rank() == 1, "matvec: expects matrix and vector");
  require(mv.cols() == vv.size(), "matvec: dimension mismatch");
  Tensor out({mv.rows()});
  for (std::size_t i = 0; i < mv.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < mv.cols(); ++j) s += mv.at(i, j) * vv[j];
    out[i] = s;
  }
  Var o = t.record(std::move(out), {m.id, v.id});
  t.set_backprop(o.id, [tp = &t, mid = m.id, vid = v.id](const Tensor& oa, std::vector<Tensor>& adj) {
    const Tensor& mv = tp->value(mid);
    const Tensor& vv = tp->value(vid);
    Tensor& dm = adj[mid];
    Tensor& dv = adj[vid];
    for (std::size_t i = 0; i < mv.rows(); ++i) {
      const double g = oa[i];
      for (std::size_t j = 0; j < mv.cols(); ++j) {
        dm.at(i, j) += g * vv[j];
        dv[j] += mv.at(i, j) * g;
      }
    }
  });
  return o;
}

inline Var tanh(Var x) {
  Tape& t = detail::tape_of(x);
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(xv[i]);
  Var o = t.record(std::move(out), {x.id});
  t.set_backprop(o.id, [tp = &t, xid = x.id, oid = o.id](const Tensor& oa, std::vector<Tensor>& adj) {
    const Tensor& y = tp->value(oid);
    for (std::size_t i = 0; i < oa.size(); ++i) adj[xid][i] += oa[i] * (1.0 - y[i] * y[i]);
  });
  return o;
}

inline Var sigmoid(Var x) {
  Tape& t = detail::tape_of(x);
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = detail::stable_sigmoid(xv[i]);
  Var o = t.record(std::move(out), {x.id});
  t.set_backprop(o.id, [tp = &t, xid = x.id, oid = o.id](const Tensor& oa, std::vector<Tensor>& adj) {
    const Tensor& y = tp->value(oid);
    for (std::size_t i = 0; i < oa.size(); ++i) adj[xid][i] += oa[i] * y[i] * (1.0 - y[i]);
  });
  return o;
}

// Max-subtracted for stability; shift-invariant.
inline Var softmax(Var x) {
  Tape& t = detail::tape_of(x);
  const Tensor& xv = x.value();
  require(xv.rank() == 1 && xv.size() >= 1, "softmax: expects a non-empty vector");
  double mx = xv[0];
  for (std::size_t i = 1; i < xv.size(); ++i) mx = std::max(mx, xv[i]);
  Tensor out(xv.shape());
  double denom = 0.0;
  for (std::size_t i = 0; i < xv.size(); ++i) {
    out[i] = std::exp(xv[i] - mx);
    denom += out[i];
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i] /= denom;
  Var o = t.record(std::move(out), {x.id});
  t.set_backprop(o.id, [tp = &t, xid = x.id, oid = o.id](const Tensor& oa, std::vector<Tensor>& adj) {
    const Tensor& y = tp->value(oid);
    double inner = 0.0;
    for (std::size_t i = 0; i < oa.size(); ++i) inner += oa[i] * y[i];
    for (std::size_t i = 0; i < oa.size(); ++i) adj[xid][i] += y[i] * (oa[i] - inner);
  });
  return o;
}

inline Var log(Var x) {
  Tape& t = detail::tape_of(x);
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!(xv[i] > 0.0)) throw NumericError("log: non-positive input");
    out[i] = std::log(xv[i]);
  }
  Var o = t.record(std::move(out), {x.id});
  t.set_backprop(o.id, [tp = &t, xid = x.id](const Tensor& oa, std::vector<Tensor>& adj) {
    const Tensor& xv = tp->value(xid);
    for (std::size_t i = 0; i < oa.size(); ++i) adj[xid][i] += oa[i] / xv[i];
  });
  return o;
}

// Sum of p_i * log(p_i) with the convention 0*log(0) = 0.
inline Var neg_entropy(Var p) {
  Tape& t = detail::tape_of(p);
  const Tensor& pv = p.value();
  double s = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    require(pv[i] >= 0.0, "neg_entropy: negative probability");
    if (pv[i] > 0.0) s += pv[i] * std::log(pv[i]);
  }
  Var o = t.record(Tensor::scalar(s), {p.id});
  t.set_backprop(o.id, [tp = &t, pid = p.id](const Tensor& oa, std::vector<Tensor>& adj) {
    const Tensor& pv = tp->value(pid);
    const double g = oa[0];
    for (std::size_t i = 0; i < pv.size(); ++i) {
      if (pv[i] > 0.0) adj[pid][i] += g * (std::log(pv[i]) + 1.0);
    }
  });
  return o;
}

// v / max(||v||_2, eps); the eps floor guards the all-zero vector.
inline Var l2_normalize(Var v, double eps = 1e-12) {
  require(eps > 0.0, "l2_normalize: eps must be positive");
  Tape& t = detail::tape_of(v);
  const Tensor& vv = v.value();
  const double norm = l2_norm(vv);
  const double denom = std::max(norm, eps);
  Tensor out(vv.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = vv[i] / denom;
  Var o = t.record(std::move(out), {v.id});
  t.set_backprop(o.id, [tp = &t, vid = v.id, eps](const Tensor& oa, std::vector<Tensor>& adj) {
    const Tensor& vv = tp->value(vid);
    const double norm = l2_norm(vv);
    if (norm > eps) {
      double inner = 0.0;
      for (std::size_t i = 0; i < oa.size(); ++i) inner += vv[i] * oa[i];
      const double n3 = norm * norm * norm;
      for (std::size_t i = 0; i < oa.size(); ++i) adj[vid][i] += oa[i] / norm - vv[i] * inner / n3;
    } else {
      for (std::size_t i = 0; i < oa.size(); ++i) adj[vid][i] += oa[i] / eps;
    }
  });
  return o;
}

// Coordinate-wise maximum over same-shape inputs; gradient routes to the
// argmax input, ties broken by lowest input index.
inline Var coordinate_max(std::span<const Var> vs) {
  require(!vs.empty(), "coordinate_max: empty input list");
  Tape& t = detail::tape_of(vs[0]);
  const Tensor& first = vs[0].value();
  std::vector<Tape::NodeId> inputs;
  inputs.reserve(vs.size());
  for (Var v : vs) {
    detail::same_tape(vs[0], v);
    require(v.value().shape() == first.shape(), "coordinate_max: shape mismatch");
    inputs.push_back(v.id);
  }
  Tensor out(first.shape());
  std::vector<Tape::NodeId> winner(first.size(), vs[0].id);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = first[i];
  for (std::size_t k = 1; k < vs.size(); ++k) {
    const Tensor& cur = vs[k].value();
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (cur[i] > out[i]) {
        out[i] = cur[i];
        winner[i] = vs[k].id;
      }
    }
  }
  Var o = t.record(std::move(out), std::span<const Tape::NodeId>(inputs));
  t.set_backprop(o.id, [w = std::move(winner)](const Tensor& oa, std::vector<Tensor>& adj) {
    for (std::size_t i = 0; i < oa.size(); ++i) adj[w[i]][i] += oa[i];
  });
  return o;
}

inline Var dot(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require(av.shape() == bv.shape(), "dot: shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) s += av[i] * bv[i];
  Var o = t.record(Tensor::scalar(s), {a.id, b.id});
  t.set_backprop(o.id, [tp = &t, aid = a.id, bid = b.id](const Tensor& oa, std::vector<Tensor>& adj) {
    const Tensor& av = tp->value(aid);
    const Tensor& bv = tp->value(bid);
    const double g = oa[0];
    for (std::size_t i = 0; i < av.size(); ++i) {
      adj[aid][i] += g * bv[i];
      adj[bid][i] += g * av[i];
    }
  });
  return o;
}

// Select one coordinate as a scalar node.
inline Var pick(Var v, std::size_t index) {
  Tape& t = detail::tape_of(v);
  const Tensor& vv = v.value();
  require(index < vv.size(), "pick: index out of range");
  Var o = t.record(Tensor::scalar(vv[index]), {v.id});
  t.set_backprop(o.id, [vid = v.id, index](const Tensor& oa, std::vector<Tensor>& adj) {
    adj[vid][index] += oa[0];
  });
  return o;
}

// Stack 1-D nodes into one vector node.
inline Var concat(std::span<const Var> parts) {
  require(!parts.empty(), "concat: empty input list");
  Tape& t = detail::tape_of(parts[0]);
  std::size_t total = 0;
  std::vector<Tape::NodeId> inputs;
  std::vector<std::size_t> sizes;
  inputs.reserve(parts.size());
  sizes.reserve(parts.size());
  for (Var p : parts) {
    detail::same_tape(parts[0], p);
    require(p.value().rank() == 1, "concat: expects 1-D parts");
    total += p.value().size();
    inputs.push_back(p.id);
    sizes.push_back(p.value().size());
  }
  Tensor out({total});
  std::size_t off = 0;
  for (Var p : parts) {
    const Tensor& pv = p.value();
    for (std::size_t i = 0; i < pv.size(); ++i) out[off + i] = pv[i];
    off += pv.size();
  }
  Var o = t.record(std::move(out), std::span<const Tape::NodeId>(inputs));
  t.set_backprop(o.id, [ids = std::move(inputs), sz = std::move(sizes)](const Tensor& oa,
                                                                        std::vector<Tensor>& adj) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      for (std::size_t i = 0; i < sz[k]; ++i) adj[ids[k]][i] += oa[off + i];
      off += sz[k];
    }
  });
  return o;
}

inline Var concat(const std::vector<Var>& parts) {
  return concat(std::span<const Var>(parts.data(), parts.size()));
}

inline Var coordinate_max(const std::vector<Var>& vs) {
  return coordinate_max(std::span<const Var>(vs.data(), vs.size()));
}

}  // namespace adascan
