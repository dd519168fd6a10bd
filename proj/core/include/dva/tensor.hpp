#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace dva {

struct Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

// Dense row-major float32 tensor participating in a reverse-mode tape.
// Leaves are created with make()/zeros()/full(); every op below returns a
// fresh node wired to its parents. Gradients accumulate; call zero_grad()
// between optimization steps.
struct Tensor : std::enable_shared_from_this<Tensor> {
    std::vector<int> shape;
    std::vector<float> data;
    bool requires_grad = false;
    std::vector<float> grad;  // allocated on first use, same length as data

    // graph links; empty for leaves and for pure-value (no-grad) results
    std::vector<TensorPtr> parents;
    std::function<void(Tensor&)> backward_fn;

    static TensorPtr make(std::vector<int> shape, std::vector<float> values, bool requires_grad = false);
    static TensorPtr zeros(std::vector<int> shape, bool requires_grad = false);
    static TensorPtr full(std::vector<int> shape, float value, bool requires_grad = false);
    static TensorPtr scalar(float value, bool requires_grad = false);

    std::int64_t numel() const;
    int rows() const;  // rank-2 (rank-1 counts as a single row)
    int cols() const;
    bool is_scalar() const { return numel() == 1; }
    float item() const;
    float& at(int r, int c);
    float at(int r, int c) const;

    void ensure_grad();   // allocate zeros if absent
    void zero_grad();
    void accumulate_grad(const std::vector<float>& g);
};

std::string shape_str(const std::vector<int>& shape);

// Topologically ordered record of the subgraph below a root; every node
// appears after all of its parents. backward() seeds the root with 1 and
// replays the chain rule in reverse, visiting each node exactly once.
class Tape {
public:
    static Tape from(const TensorPtr& root);

    const std::vector<TensorPtr>& nodes() const { return nodes_; }
    void backward();

private:
    std::vector<TensorPtr> nodes_;
    TensorPtr root_;
};

// Runs backward from a scalar loss. ContractError if loss is not scalar or
// has no gradient lineage.
void backward(const TensorPtr& loss);

// ---- elementwise / structural ops ----
TensorPtr add(const TensorPtr& a, const TensorPtr& b);
TensorPtr sub(const TensorPtr& a, const TensorPtr& b);
TensorPtr scale(const TensorPtr& a, float s);
// mat [R x C] + vec [C] broadcast over rows (bias add)
TensorPtr add_rows(const TensorPtr& mat, const TensorPtr& vec);
TensorPtr gelu(const TensorPtr& x);
TensorPtr transpose(const TensorPtr& x);
TensorPtr reshape(const TensorPtr& x, std::vector<int> shape);
TensorPtr concat_rows(const std::vector<TensorPtr>& parts);
TensorPtr concat_cols(const std::vector<TensorPtr>& parts);
TensorPtr slice_rows(const TensorPtr& x, int r0, int r1);
TensorPtr slice_cols(const TensorPtr& x, int c0, int c1);
TensorPtr gather_rows(const TensorPtr& x, const std::vector<int>& indices);
TensorPtr detach(const TensorPtr& x);

// ---- contractions / reductions ----
TensorPtr matmul(const TensorPtr& a, const TensorPtr& b);
TensorPtr sum(const TensorPtr& x);
TensorPtr mean(const TensorPtr& x);

// ---- row-wise normalizations (last dimension) ----
TensorPtr layer_norm(const TensorPtr& x, const TensorPtr& gain, const TensorPtr& bias, float eps = 1e-6f);
TensorPtr softmax(const TensorPtr& x);
TensorPtr l2_normalize(const TensorPtr& x);

// mean over rows of -log softmax(logits)[label]; labels index columns
TensorPtr cross_entropy_mean(const TensorPtr& logits, const std::vector<int>& labels);

}  // namespace dva
