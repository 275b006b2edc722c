#include "agpo/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>

namespace agpo {

const char* op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kConst: return "const";
    case Op::kAdd: return "add";
    case Op::kAddScalar: return "add_scalar";
    case Op::kMul: return "mul";
    case Op::kMulScalar: return "mul_scalar";
    case Op::kMatMul: return "matmul";
    case Op::kExp: return "exp";
    case Op::kLog: return "log";
    case Op::kTanh: return "tanh";
    case Op::kGather: return "gather";
    case Op::kSum: return "sum";
    case Op::kMean: return "mean";
    case Op::kMaxScalar: return "max_with";
    case Op::kClip: return "clip";
    case Op::kStopGrad: return "stop_grad";
  }
  return "?";
}

void Graph::fail(int node_id, const std::string& msg) const {
  throw std::invalid_argument("graph node #" + std::to_string(node_id) + ": " + msg);
}

Node Graph::push(NodeRec rec) {
  rec.off = arena_size_;
  arena_size_ += numel_of(rec);
  nodes_.push_back(rec);
  return Node{static_cast<int>(nodes_.size()) - 1, this};
}

const Graph::NodeRec& Graph::rec(Node n) const {
  if (n.graph != this || n.id < 0 || n.id >= num_nodes())
    throw std::invalid_argument("node handle does not belong to this graph");
  return nodes_[n.id];
}

void Graph::check_same_shape(const NodeRec& a, const NodeRec& b, const char* what) const {
  if (a.rows != b.rows || a.cols != b.cols)
    throw std::invalid_argument(std::string("graph node #") +
                                std::to_string(nodes_.size()) + " " + what +
                                ": operand shapes differ");
}

Node Graph::leaf(const std::string& name, std::vector<int> shape, bool differentiable) {
  if (leaf_id(name) >= 0)
    throw std::invalid_argument("duplicate leaf name '" + name + "'");
  Tensor probe = Tensor::zeros(shape);  // validates dims
  NodeRec r;
  r.op = Op::kLeaf;
  r.rows = probe.rows();
  r.cols = probe.rank() == 2 ? probe.cols() : 0;
  r.leaf_id = static_cast<int>(leaves_.size());
  Node n = push(r);
  leaves_.push_back(LeafInfo{name, n.id, differentiable});
  return n;
}

Node Graph::constant(const Tensor& value) {
  NodeRec r;
  r.op = Op::kConst;
  r.rows = value.rows();
  r.cols = value.rank() == 2 ? value.cols() : 0;
  r.idx_begin = static_cast<int>(const_pool_.size());
  r.idx_len = value.numel();
  const_pool_.insert(const_pool_.end(), value.data.begin(), value.data.end());
  return push(r);
}

Node Graph::add(Node a, Node b) {
  const NodeRec& ra = rec(a);
  const NodeRec& rb = rec(b);
  check_same_shape(ra, rb, "add");
  NodeRec r;
  r.op = Op::kAdd;
  r.a = a.id;
  r.b = b.id;
  r.rows = ra.rows;
  r.cols = ra.cols;
  return push(r);
}

Node Graph::add(Node a, double c) {
  const NodeRec& ra = rec(a);
  NodeRec r;
  r.op = Op::kAddScalar;
  r.a = a.id;
  r.c0 = c;
  r.rows = ra.rows;
  r.cols = ra.cols;
  return push(r);
}

Node Graph::mul(Node a, Node b) {
  const NodeRec& ra = rec(a);
  const NodeRec& rb = rec(b);
  check_same_shape(ra, rb, "mul");
  NodeRec r;
  r.op = Op::kMul;
  r.a = a.id;
  r.b = b.id;
  r.rows = ra.rows;
  r.cols = ra.cols;
  return push(r);
}

Node Graph::mul(Node a, double c) {
  const NodeRec& ra = rec(a);
  NodeRec r;
  r.op = Op::kMulScalar;
  r.a = a.id;
  r.c0 = c;
  r.rows = ra.rows;
  r.cols = ra.cols;
  return push(r);
}

Node Graph::matmul(Node a, Node b) {
  const NodeRec& ra = rec(a);
  const NodeRec& rb = rec(b);
  if (ra.cols == 0 || rb.cols == 0)
    fail(static_cast<int>(nodes_.size()), "matmul: operands must be rank-2");
  if (ra.cols != rb.rows)
    fail(static_cast<int>(nodes_.size()), "matmul: inner dimensions differ");
  NodeRec r;
  r.op = Op::kMatMul;
  r.a = a.id;
  r.b = b.id;
  r.rows = ra.rows;
  r.cols = rb.cols;
  return push(r);
}

Node Graph::exp(Node a) {
  const NodeRec& ra = rec(a);
  NodeRec r;
  r.op = Op::kExp;
  r.a = a.id;
  r.rows = ra.rows;
  r.cols = ra.cols;
  return push(r);
}

Node Graph::log(Node a) {
  const NodeRec& ra = rec(a);
  NodeRec r;
  r.op = Op::kLog;
  r.a = a.id;
  r.rows = ra.rows;
  r.cols = ra.cols;
  return push(r);
}

Node Graph::tanh(Node a) {
  const NodeRec& ra = rec(a);
  NodeRec r;
  r.op = Op::kTanh;
  r.a = a.id;
  r.rows = ra.rows;
  r.cols = ra.cols;
  return push(r);
}

Node Graph::stop_grad(Node a) {
  const NodeRec& ra = rec(a);
  NodeRec r;
  r.op = Op::kStopGrad;
  r.a = a.id;
  r.rows = ra.rows;
  r.cols = ra.cols;
  return push(r);
}

Node Graph::gather(Node a, const std::vector<int>& indices) {
  const NodeRec& ra = rec(a);
  if (indices.empty())
    fail(static_cast<int>(nodes_.size()), "gather: empty index list");
  // rank-1 input or a single-row matrix: element gather (rank-1 result);
  // multi-row matrix: row gather.
  const bool row_gather = (ra.cols != 0 && ra.rows != 1);
  const int limit = row_gather ? ra.rows : numel_of(ra);
  for (int i : indices)
    if (i < 0 || i >= limit)
      fail(static_cast<int>(nodes_.size()), "gather: index out of range");
  NodeRec r;
  r.op = Op::kGather;
  r.a = a.id;
  r.rows = static_cast<int>(indices.size());
  r.cols = row_gather ? ra.cols : 0;
  r.c0 = row_gather ? 1.0 : 0.0;
  r.idx_begin = static_cast<int>(index_pool_.size());
  r.idx_len = static_cast<int>(indices.size());
  index_pool_.insert(index_pool_.end(), indices.begin(), indices.end());
  return push(r);
}

Node Graph::sum(Node a) {
  (void)rec(a);
  NodeRec r;
  r.op = Op::kSum;
  r.a = a.id;
  r.rows = 1;
  r.cols = 0;
  return push(r);
}

Node Graph::mean(Node a) {
  (void)rec(a);
  NodeRec r;
  r.op = Op::kMean;
  r.a = a.id;
  r.rows = 1;
  r.cols = 0;
  return push(r);
}

Node Graph::max_with(Node a, double c) {
  const NodeRec& ra = rec(a);
  NodeRec r;
  r.op = Op::kMaxScalar;
  r.a = a.id;
  r.c0 = c;
  r.rows = ra.rows;
  r.cols = ra.cols;
  return push(r);
}

Node Graph::clip(Node a, double lo, double hi) {
  if (!(lo <= hi))
    fail(static_cast<int>(nodes_.size()), "clip: lo > hi");
  const NodeRec& ra = rec(a);
  NodeRec r;
  r.op = Op::kClip;
  r.a = a.id;
  r.c0 = lo;
  r.c1 = hi;
  r.rows = ra.rows;
  r.cols = ra.cols;
  return push(r);
}

void Graph::set_root(Node r) {
  (void)rec(r);
  root_ = r;
}

int Graph::leaf_id(const std::string& name) const {
  for (std::size_t i = 0; i < leaves_.size(); ++i)
    if (leaves_[i].name == name) return static_cast<int>(i);
  return -1;
}

std::vector<int> Graph::node_shape(Node n) const {
  const NodeRec& r = rec(n);
  if (r.cols == 0) return {r.rows};
  return {r.rows, r.cols};
}

// ---------------------------------------------------------------------------
// evaluation
// ---------------------------------------------------------------------------

Bindings::Bindings(const Graph& g) : graph_(&g), values_(g.num_leaves(), nullptr) {}

void Bindings::set(const Node& leaf, const Tensor& value) {
  const auto& r = graph_->nodes_[leaf.id];
  if (leaf.graph != graph_ || r.op != Op::kLeaf)
    throw std::invalid_argument("Bindings::set: node is not a leaf of this graph");
  values_[r.leaf_id] = &value;
}

void Bindings::set(const std::string& name, const Tensor& value) {
  int id = graph_->leaf_id(name);
  if (id < 0) throw std::invalid_argument("Bindings::set: unknown leaf '" + name + "'");
  values_[id] = &value;
}

Tensor Graph::forward(Workspace& ws, const Bindings& binds) const {
  if (!root_.valid()) throw std::invalid_argument("forward: no root set");
  ws.values.resize(arena_size_);
  double* v = ws.values.data();
  const int n = num_nodes();
  for (int i = 0; i < n; ++i) {
    const NodeRec& r = nodes_[i];
    double* out = v + r.off;
    const int ne = numel_of(r);
    switch (r.op) {
      case Op::kLeaf: {
        const Tensor* t = binds.get(r.leaf_id);
        if (!t)
          throw std::invalid_argument("forward: leaf '" + leaves_[r.leaf_id].name +
                                      "' is unbound");
        int trows = t->rows();
        int tcols = t->rank() == 2 ? t->cols() : 0;
        if (trows != r.rows || tcols != r.cols)
          throw std::invalid_argument("forward: leaf '" + leaves_[r.leaf_id].name +
                                      "' bound with wrong shape");
        std::memcpy(out, t->data.data(), sizeof(double) * ne);
        break;
      }
      case Op::kConst:
        std::memcpy(out, const_pool_.data() + r.idx_begin, sizeof(double) * ne);
        break;
      case Op::kAdd: {
        const double* a = v + nodes_[r.a].off;
        const double* b = v + nodes_[r.b].off;
        for (int k = 0; k < ne; ++k) out[k] = a[k] + b[k];
        break;
      }
      case Op::kAddScalar: {
        const double* a = v + nodes_[r.a].off;
        for (int k = 0; k < ne; ++k) out[k] = a[k] + r.c0;
        break;
      }
      case Op::kMul: {
        const double* a = v + nodes_[r.a].off;
        const double* b = v + nodes_[r.b].off;
        for (int k = 0; k < ne; ++k) out[k] = a[k] * b[k];
        break;
      }
      case Op::kMulScalar: {
        const double* a = v + nodes_[r.a].off;
        for (int k = 0; k < ne; ++k) out[k] = a[k] * r.c0;
        break;
      }
      case Op::kMatMul: {
        const NodeRec& ra = nodes_[r.a];
        const NodeRec& rb = nodes_[r.b];
        const double* a = v + ra.off;
        const double* b = v + rb.off;
        const int m = ra.rows, kk = ra.cols, nn = rb.cols;
        for (int i2 = 0; i2 < m; ++i2)
          for (int j = 0; j < nn; ++j) {
            double s = 0.0;
            for (int k = 0; k < kk; ++k) s += a[i2 * kk + k] * b[k * nn + j];
            out[i2 * nn + j] = s;
          }
        break;
      }
      case Op::kExp: {
        const double* a = v + nodes_[r.a].off;
        for (int k = 0; k < ne; ++k) out[k] = std::exp(a[k]);
        break;
      }
      case Op::kLog: {
        const double* a = v + nodes_[r.a].off;
        for (int k = 0; k < ne; ++k) {
          if (!(a[k] > 0.0))
            throw std::domain_error("graph node #" + std::to_string(i) +
                                    " log: non-positive input " + std::to_string(a[k]));
          out[k] = std::log(a[k]);
        }
        break;
      }
      case Op::kTanh: {
        const double* a = v + nodes_[r.a].off;
        for (int k = 0; k < ne; ++k) out[k] = std::tanh(a[k]);
        break;
      }
      case Op::kGather: {
        const NodeRec& ra = nodes_[r.a];
        const double* a = v + ra.off;
        const int* idx = index_pool_.data() + r.idx_begin;
        if (r.c0 != 0.0) {  // row gather
          const int c = ra.cols;
          for (int ri = 0; ri < r.idx_len; ++ri)
            std::memcpy(out + ri * c, a + idx[ri] * c, sizeof(double) * c);
        } else {
          for (int e = 0; e < r.idx_len; ++e) out[e] = a[idx[e]];
        }
        break;
      }
      case Op::kSum: {
        const NodeRec& ra = nodes_[r.a];
        const double* a = v + ra.off;
        double s = 0.0;
        const int na = numel_of(ra);
        for (int k = 0; k < na; ++k) s += a[k];
        out[0] = s;
        break;
      }
      case Op::kMean: {
        const NodeRec& ra = nodes_[r.a];
        const double* a = v + ra.off;
        double s = 0.0;
        const int na = numel_of(ra);
        for (int k = 0; k < na; ++k) s += a[k];
        out[0] = s / na;
        break;
      }
      case Op::kMaxScalar: {
        const double* a = v + nodes_[r.a].off;
        for (int k = 0; k < ne; ++k) out[k] = a[k] >= r.c0 ? a[k] : r.c0;
        break;
      }
      case Op::kClip: {
        const double* a = v + nodes_[r.a].off;
        for (int k = 0; k < ne; ++k)
          out[k] = a[k] < r.c0 ? r.c0 : (a[k] > r.c1 ? r.c1 : a[k]);
        break;
      }
      case Op::kStopGrad: {
        const double* a = v + nodes_[r.a].off;
        std::memcpy(out, a, sizeof(double) * ne);
        break;
      }
    }
  }
  return value_of(ws, root_);
}

EvalResult Graph::gradient(Workspace& ws, const Bindings& binds) const {
  EvalResult result;
  result.value = forward(ws, binds);
  if (result.value.numel() != 1)
    throw std::invalid_argument("gradient: root is not a scalar");

  ws.adjoints.assign(arena_size_, 0.0);
  double* v = ws.values.data();
  double* g = ws.adjoints.data();
  g[nodes_[root_.id].off] = 1.0;

  for (int i = num_nodes() - 1; i >= 0; --i) {
    const NodeRec& r = nodes_[i];
    const double* adj = g + r.off;
    const int ne = numel_of(r);
    switch (r.op) {
      case Op::kLeaf:
      case Op::kConst:
      case Op::kStopGrad:
        break;
      case Op::kAdd: {
        double* ga = g + nodes_[r.a].off;
        double* gb = g + nodes_[r.b].off;
        for (int k = 0; k < ne; ++k) {
          ga[k] += adj[k];
          gb[k] += adj[k];
        }
        break;
      }
      case Op::kAddScalar: {
        double* ga = g + nodes_[r.a].off;
        for (int k = 0; k < ne; ++k) ga[k] += adj[k];
        break;
      }
      case Op::kMul: {
        double* ga = g + nodes_[r.a].off;
        double* gb = g + nodes_[r.b].off;
        const double* a = v + nodes_[r.a].off;
        const double* b = v + nodes_[r.b].off;
        for (int k = 0; k < ne; ++k) {
          ga[k] += adj[k] * b[k];
          gb[k] += adj[k] * a[k];
        }
        break;
      }
      case Op::kMulScalar: {
        double* ga = g + nodes_[r.a].off;
        for (int k = 0; k < ne; ++k) ga[k] += adj[k] * r.c0;
        break;
      }
      case Op::kMatMul: {
        const NodeRec& ra = nodes_[r.a];
        const NodeRec& rb = nodes_[r.b];
        double* ga = g + ra.off;
        double* gb = g + rb.off;
        const double* a = v + ra.off;
        const double* b = v + rb.off;
        const int m = ra.rows, kk = ra.cols, nn = rb.cols;
        // dA = adj * B^T ; dB = A^T * adj
        for (int i2 = 0; i2 < m; ++i2)
          for (int l = 0; l < kk; ++l) {
            double s = 0.0;
            for (int j = 0; j < nn; ++j) s += adj[i2 * nn + j] * b[l * nn + j];
            ga[i2 * kk + l] += s;
          }
        for (int l = 0; l < kk; ++l)
          for (int j = 0; j < nn; ++j) {
            double s = 0.0;
            for (int i2 = 0; i2 < m; ++i2) s += a[i2 * kk + l] * adj[i2 * nn + j];
            gb[l * nn + j] += s;
          }
        break;
      }
      case Op::kExp: {
        double* ga = g + nodes_[r.a].off;
        const double* out = v + r.off;
        for (int k = 0; k < ne; ++k) ga[k] += adj[k] * out[k];
        break;
      }
      case Op::kLog: {
        double* ga = g + nodes_[r.a].off;
        const double* a = v + nodes_[r.a].off;
        for (int k = 0; k < ne; ++k) ga[k] += adj[k] / a[k];
        break;
      }
      case Op::kTanh: {
        double* ga = g + nodes_[r.a].off;
        const double* out = v + r.off;
        for (int k = 0; k < ne; ++k) ga[k] += adj[k] * (1.0 - out[k] * out[k]);
        break;
      }
      case Op::kGather: {
        const NodeRec& ra = nodes_[r.a];
        double* ga = g + ra.off;
        const int* idx = index_pool_.data() + r.idx_begin;
        if (r.c0 != 0.0) {
          const int c = ra.cols;
          for (int ri = 0; ri < r.idx_len; ++ri)
            for (int k = 0; k < c; ++k) ga[idx[ri] * c + k] += adj[ri * c + k];
        } else {
          for (int e = 0; e < r.idx_len; ++e) ga[idx[e]] += adj[e];
        }
        break;
      }
      case Op::kSum: {
        const NodeRec& ra = nodes_[r.a];
        double* ga = g + ra.off;
        const int na = numel_of(ra);
        for (int k = 0; k < na; ++k) ga[k] += adj[0];
        break;
      }
      case Op::kMean: {
        const NodeRec& ra = nodes_[r.a];
        double* ga = g + ra.off;
        const int na = numel_of(ra);
        const double w = adj[0] / na;
        for (int k = 0; k < na; ++k) ga[k] += w;
        break;
      }
      case Op::kMaxScalar: {
        double* ga = g + nodes_[r.a].off;
        const double* a = v + nodes_[r.a].off;
        for (int k = 0; k < ne; ++k)
          if (a[k] >= r.c0) ga[k] += adj[k];
        break;
      }
      case Op::kClip: {
        double* ga = g + nodes_[r.a].off;
        const double* a = v + nodes_[r.a].off;
        for (int k = 0; k < ne; ++k)
          if (a[k] >= r.c0 && a[k] <= r.c1) ga[k] += adj[k];
        break;
      }
    }
  }

  result.grads.resize(leaves_.size());
  for (std::size_t li = 0; li < leaves_.size(); ++li) {
    if (!leaves_[li].differentiable) continue;
    const NodeRec& lr = nodes_[leaves_[li].node_id];
    Tensor t = Tensor::zeros(lr.cols == 0 ? std::vector<int>{lr.rows}
                                          : std::vector<int>{lr.rows, lr.cols});
    std::memcpy(t.data.data(), g + lr.off, sizeof(double) * t.numel());
    result.grads[li] = std::move(t);
  }
  return result;
}

Tensor Graph::forward(const Bindings& binds) const {
  Workspace ws;
  return forward(ws, binds);
}

EvalResult Graph::gradient(const Bindings& binds) const {
  Workspace ws;
  return gradient(ws, binds);
}

double Graph::scalar_of(const Workspace& ws, Node n) const {
  const NodeRec& r = rec(n);
  if (numel_of(r) != 1) throw std::invalid_argument("scalar_of: node is not scalar");
  return ws.values[r.off];
}

Tensor Graph::value_of(const Workspace& ws, Node n) const {
  const NodeRec& r = rec(n);
  Tensor t = Tensor::zeros(r.cols == 0 ? std::vector<int>{r.rows}
                                       : std::vector<int>{r.rows, r.cols});
  std::memcpy(t.data.data(), ws.values.data() + r.off, sizeof(double) * t.numel());
  return t;
}

double Graph::min_kink_distance(const Workspace& ws) const {
  double best = std::numeric_limits<double>::infinity();
  for (const NodeRec& r : nodes_) {
    if (r.op != Op::kMaxScalar && r.op != Op::kClip) continue;
    const NodeRec& ra = nodes_[r.a];
    const double* a = ws.values.data() + ra.off;
    const int na = numel_of(ra);
    for (int k = 0; k < na; ++k) {
      double d = std::abs(a[k] - r.c0);
      if (r.op == Op::kClip) d = std::min(d, std::abs(a[k] - r.c1));
      best = std::min(best, d);
    }
  }
  return best;
}

}  // namespace agpo
