#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "agpo/tensor.hpp"

namespace agpo {

class Graph;

// Handle to a node inside a Graph. Cheap to copy; valid as long as the
// graph it came from is alive.
struct Node {
  int id = -1;
  Graph* graph = nullptr;
  bool valid() const { return id >= 0 && graph != nullptr; }
};

enum class Op : std::uint8_t {
  kLeaf,
  kConst,
  kAdd,        // elementwise, same shape
  kAddScalar,  // x + c
  kMul,        // elementwise, same shape
  kMulScalar,  // x * c
  kMatMul,     // (m,k)x(k,n) -> (m,n)
  kExp,
  kLog,
  kTanh,
  kGather,     // rows of a matrix / elements of a vector
  kSum,        // full reduction -> scalar
  kMean,       // full reduction -> scalar
  kMaxScalar,  // elementwise max(x, c); derivative 1 where x >= c
  kClip,       // clip(x, lo, hi); derivative 1 where lo <= x <= hi
  kStopGrad,   // identity forward, zero backward
};

const char* op_name(Op op);

// Leaf values for one evaluation. Tensors are referenced, not copied;
// they must outlive the forward/gradient call.
class Bindings {
 public:
  explicit Bindings(const Graph& g);
  void set(const Node& leaf, const Tensor& value);
  void set(const std::string& name, const Tensor& value);
  const Tensor* get(int leaf_id) const { return values_[leaf_id]; }

 private:
  const Graph* graph_;
  std::vector<const Tensor*> values_;
};

// Scratch buffers for one evaluation. A Graph is immutable once built;
// forward/gradient write only into the workspace, so concurrent
// evaluations of a shared graph need one workspace per thread.
struct Workspace {
  std::vector<double> values;
  std::vector<double> adjoints;
};

struct EvalResult {
  Tensor value;                // root value
  std::vector<Tensor> grads;   // indexed by leaf id; empty for non-differentiable leaves
};

// Reverse-mode differentiation graph over small dense tensors. Nodes are
// appended in construction order, which is already topological; the
// backward sweep visits them exactly once in reverse.
class Graph {
 public:
  // --- construction ---
  Node leaf(const std::string& name, std::vector<int> shape, bool differentiable);
  Node constant(const Tensor& value);
  Node constant(double value) { return constant(Tensor::scalar(value)); }

  Node add(Node a, Node b);
  Node add(Node a, double c);
  Node mul(Node a, Node b);
  Node mul(Node a, double c);
  Node matmul(Node a, Node b);
  Node exp(Node a);
  Node log(Node a);
  Node tanh(Node a);
  Node gather(Node a, const std::vector<int>& indices);
  Node sum(Node a);
  Node mean(Node a);
  Node max_with(Node a, double c);
  Node clip(Node a, double lo, double hi);
  Node stop_grad(Node a);

  // sugar built on the op set above
  Node neg(Node a) { return mul(a, -1.0); }
  Node sub(Node a, Node b) { return add(a, neg(b)); }

  void set_root(Node r);
  Node root() const { return root_; }

  // --- evaluation (const: safe from multiple threads with distinct workspaces) ---
  Tensor forward(Workspace& ws, const Bindings& binds) const;
  // Forward then backward from the scalar root. Gradients are returned for
  // every differentiable leaf, in leaf-id order.
  EvalResult gradient(Workspace& ws, const Bindings& binds) const;

  // convenience overloads that allocate a workspace internally
  Tensor forward(const Bindings& binds) const;
  EvalResult gradient(const Bindings& binds) const;

  // value of any node after a forward pass on `ws`
  double scalar_of(const Workspace& ws, Node n) const;
  Tensor value_of(const Workspace& ws, Node n) const;

  // Minimum distance, over all clip/max nodes, between their input values
  // and the nearest kink of the piecewise-linear rule. Finite-difference
  // checks are only meaningful away from those kinks. Requires a prior
  // forward pass on `ws`; +inf when the graph has no such nodes.
  double min_kink_distance(const Workspace& ws) const;

  // --- introspection ---
  int num_nodes() const { return static_cast<int>(nodes_.size()); }
  int num_leaves() const { return static_cast<int>(leaves_.size()); }
  int leaf_id(const std::string& name) const;  // -1 if absent
  const std::string& leaf_name(int leaf_id) const { return leaves_[leaf_id].name; }
  bool leaf_differentiable(int leaf_id) const { return leaves_[leaf_id].differentiable; }
  std::vector<int> node_shape(Node n) const;

 private:
  struct NodeRec {
    Op op;
    int a = -1, b = -1;
    double c0 = 0.0, c1 = 0.0;  // scalar attributes (AddScalar, Clip lo/hi, ...)
    int rows = 0, cols = 0;     // cols == 0 encodes rank-1 of length `rows`
    int idx_begin = 0, idx_len = 0;
    int leaf_id = -1;
    int off = 0;  // offset into the value/adjoint arena
  };
  struct LeafInfo {
    std::string name;
    int node_id;
    bool differentiable;
  };

  int numel_of(const NodeRec& n) const { return n.rows * (n.cols == 0 ? 1 : n.cols); }
  Node push(NodeRec rec);
  const NodeRec& rec(Node n) const;
  void check_same_shape(const NodeRec& a, const NodeRec& b, const char* what) const;
  [[noreturn]] void fail(int node_id, const std::string& msg) const;

  std::vector<NodeRec> nodes_;
  std::vector<LeafInfo> leaves_;
  std::vector<int> index_pool_;
  std::vector<double> const_pool_;  // payloads of kConst nodes (idx_begin reused as offset)
  Node root_{};
  int arena_size_ = 0;

  friend class Bindings;
};

}  // namespace agpo
