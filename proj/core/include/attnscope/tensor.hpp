#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

// Dense f64 tensors and a tape-based reverse-mode autodiff graph covering
// exactly the layers the two models need. Eager forward evaluation; backward
// closures run in reverse creation order. All reductions use a fixed
// summation order, so forward and backward are bit-stable across runs.

namespace attnscope::tensor {

struct Tensor {
    std::vector<int> dims;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> d);  // zero-filled
    Tensor(std::vector<int> d, std::vector<double> values);
    static Tensor scalar(double v);

    std::size_t numel() const { return data.size(); }
    int rank() const { return static_cast<int>(dims.size()); }

    // rank-2 [n,m] accessors
    double& at2(int r, int c) { return data[static_cast<std::size_t>(r) * dims[1] + c]; }
    double at2(int r, int c) const { return data[static_cast<std::size_t>(r) * dims[1] + c]; }
    // rank-3 [c,h,w] accessors
    double& at3(int ch, int r, int c) {
        return data[(static_cast<std::size_t>(ch) * dims[1] + r) * dims[2] + c];
    }
    double at3(int ch, int r, int c) const {
        return data[(static_cast<std::size_t>(ch) * dims[1] + r) * dims[2] + c];
    }
};

class Graph {
  public:
    using NodeId = int;

    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    // Leaves. value() is a constant; param() receives a gradient.
    NodeId value(Tensor t);
    NodeId param(Tensor t);

    const Tensor& val(NodeId id) const;
    const Tensor& grad(NodeId id) const;  // zeros until backward has run

    // Structural ops
    NodeId add(NodeId a, NodeId b);            // same dims
    NodeId scale(NodeId a, double s);
    NodeId matmul(NodeId a, NodeId b);         // [n,m]x[m,p] -> [n,p]
    NodeId transpose(NodeId a);                // rank 2
    NodeId slice_cols(NodeId a, int c0, int c1);
    NodeId concat_cols(const std::vector<NodeId>& parts);
    NodeId reshape(NodeId a, std::vector<int> dims);
    NodeId dot(NodeId a, NodeId b);            // scalar readout, same dims

    // Element-wise
    NodeId relu(NodeId a);
    NodeId gelu(NodeId a);                     // exact erf form
    NodeId softmax(NodeId a);                  // over last dim, max-subtracted

    // Layers
    NodeId linear(NodeId x, NodeId w, NodeId b);              // [n,di]x[di,do]+[do]
    NodeId layer_norm(NodeId x, NodeId gamma, NodeId beta);   // per row, eps 1e-5

    struct MhsaParams {
        NodeId wq, bq, wk, bk, wv, bv, wo, bo;
    };
    NodeId mhsa(NodeId x, const MhsaParams& p, int n_heads);  // scale 1/sqrt(d/heads)

    NodeId conv1x1(NodeId x, NodeId w, NodeId b);             // [ci,h,w],[ci,co] -> [co,h,w]
    NodeId avg_pool2d(NodeId x, int k = 3, int stride = 2);
    NodeId adaptive_avg_pool(NodeId x, int out_h, int out_w); // floor/ceil window tiling

    // Losses (scalar outputs)
    NodeId cc_loss(NodeId pred, NodeId gt);  // 1 - Pearson; constant pred -> loss 1, zero grad
    NodeId weighted_ce_loss(NodeId logits, const std::vector<int>& labels,
                            const std::vector<double>& class_weights);

    // Zeroes every grad, seeds d(loss)=1, replays closures newest-first.
    // Grads are overwritten per call, never accumulated across calls.
    void backward(NodeId loss);

    // cc_loss constant-prediction events since construction
    int degenerate_predictions() const { return degenerate_; }

    std::size_t size() const { return nodes_.size(); }

  private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        std::function<void()> back;  // empty for leaves
    };

    NodeId push(Tensor value, bool requires_grad, std::function<void()> back = {});
    Node& node(NodeId id);
    const Node& node(NodeId id) const;
    bool needs(NodeId id) const { return node(id).requires_grad; }
    Tensor& g(NodeId id) { return node(id).grad; }

    std::vector<Node> nodes_;
    int degenerate_ = 0;
};

}  // namespace attnscope::tensor
