#include "dva/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "dva/errors.hpp"

namespace dva {

namespace {

std::int64_t product(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
}

void check_shape(const std::vector<int>& shape) {
    if (shape.empty()) throw DimensionError("tensor shape must have at least one dim");
    for (int d : shape) {
        if (d <= 0) throw DimensionError("tensor dims must be positive, got " + shape_str(shape));
    }
}

bool any_requires_grad(const std::vector<TensorPtr>& ts) {
    for (const auto& t : ts) {
        if (t->requires_grad) return true;
    }
    return false;
}

// Wires a result node into the graph when gradients are needed.
TensorPtr make_node(std::vector<int> shape, std::vector<float> values,
                    std::vector<TensorPtr> parents, std::function<void(Tensor&)> bw) {
    auto out = Tensor::make(std::move(shape), std::move(values), false);
    if (any_requires_grad(parents)) {
        out->requires_grad = true;
        out->parents = std::move(parents);
        out->backward_fn = std::move(bw);
    }
    return out;
}

void require_rank2ish(const TensorPtr& t, const char* op) {
    if (t->shape.size() > 2) {
        throw DimensionError(std::string(op) + ": expected rank 1 or 2, got " + shape_str(t->shape));
    }
}

constexpr float kGeluC = 0.7978845608028654f;  // sqrt(2/pi)
constexpr float kGeluA = 0.044715f;

}  // namespace

std::string shape_str(const std::vector<int>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

TensorPtr Tensor::make(std::vector<int> shape, std::vector<float> values, bool requires_grad) {
    check_shape(shape);
    if (product(shape) != static_cast<std::int64_t>(values.size())) {
        throw DimensionError("data length " + std::to_string(values.size()) +
                             " does not match shape " + shape_str(shape));
    }
    auto t = std::make_shared<Tensor>();
    t->shape = std::move(shape);
    t->data = std::move(values);
    t->requires_grad = requires_grad;
    return t;
}

TensorPtr Tensor::zeros(std::vector<int> shape, bool requires_grad) {
    check_shape(shape);
    std::vector<float> v(static_cast<std::size_t>(product(shape)), 0.0f);
    return make(std::move(shape), std::move(v), requires_grad);
}

TensorPtr Tensor::full(std::vector<int> shape, float value, bool requires_grad) {
    check_shape(shape);
    std::vector<float> v(static_cast<std::size_t>(product(shape)), value);
    return make(std::move(shape), std::move(v), requires_grad);
}

TensorPtr Tensor::scalar(float value, bool requires_grad) {
    return make({1}, {value}, requires_grad);
}

std::int64_t Tensor::numel() const { return static_cast<std::int64_t>(data.size()); }

int Tensor::rows() const {
    if (shape.size() == 1) return 1;
    if (shape.size() == 2) return shape[0];
    throw DimensionError("rows(): tensor rank > 2: " + shape_str(shape));
}

int Tensor::cols() const {
    if (shape.size() == 1) return shape[0];
    if (shape.size() == 2) return shape[1];
    throw DimensionError("cols(): tensor rank > 2: " + shape_str(shape));
}

float Tensor::item() const {
    if (!is_scalar()) throw ContractError("item() requires a scalar, got " + shape_str(shape));
    return data[0];
}

float& Tensor::at(int r, int c) { return data[static_cast<std::size_t>(r) * cols() + c]; }
float Tensor::at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols() + c]; }

void Tensor::ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0f);
}

void Tensor::zero_grad() {
    if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.0f);
}

void Tensor::accumulate_grad(const std::vector<float>& g) {
    if (g.size() != data.size()) {
        throw DimensionError("gradient length mismatch for tensor " + shape_str(shape));
    }
    ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) grad[i] += g[i];
}

// ---- tape ----

Tape Tape::from(const TensorPtr& root) {
    Tape tape;
    tape.root_ = root;
    // iterative post-order DFS: parents land before their children
    std::unordered_set<const Tensor*> done;
    std::vector<std::pair<TensorPtr, std::size_t>> stack;
    stack.emplace_back(root, 0);
    std::unordered_set<const Tensor*> on_stack{root.get()};
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            TensorPtr parent = node->parents[next++];
            if (!done.count(parent.get()) && !on_stack.count(parent.get())) {
                on_stack.insert(parent.get());
                stack.emplace_back(std::move(parent), 0);
            }
        } else {
            done.insert(node.get());
            on_stack.erase(node.get());
            tape.nodes_.push_back(node);
            stack.pop_back();
        }
    }
    return tape;
}

void Tape::backward() {
    if (!root_->is_scalar()) {
        throw ContractError("backward() requires a scalar loss, got " + shape_str(root_->shape));
    }
    if (!root_->requires_grad) {
        throw ContractError("backward() on a tensor with no gradient lineage");
    }
    // Interior grads are per-pass scratch; only leaves accumulate across calls.
    for (const auto& n : nodes_) {
        if (!n->requires_grad) continue;
        if (n->backward_fn) {
            n->grad.assign(n->data.size(), 0.0f);
        } else {
            n->ensure_grad();
        }
    }
    root_->grad[0] += 1.0f;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        Tensor& n = **it;
        if (n.backward_fn && n.requires_grad) n.backward_fn(n);
    }
}

void backward(const TensorPtr& loss) {
    if (!loss->requires_grad) {
        throw ContractError("backward() on a tensor with no gradient lineage");
    }
    Tape::from(loss).backward();
}

// ---- ops ----

TensorPtr add(const TensorPtr& a, const TensorPtr& b) {
    if (a->shape != b->shape) {
        throw DimensionError("add: shape mismatch " + shape_str(a->shape) + " vs " + shape_str(b->shape));
    }
    std::vector<float> v(a->data.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a->data[i] + b->data[i];
    return make_node(a->shape, std::move(v), {a, b}, [](Tensor& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) pb.grad[i] += self.grad[i];
        }
    });
}

TensorPtr sub(const TensorPtr& a, const TensorPtr& b) {
    if (a->shape != b->shape) {
        throw DimensionError("sub: shape mismatch " + shape_str(a->shape) + " vs " + shape_str(b->shape));
    }
    std::vector<float> v(a->data.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a->data[i] - b->data[i];
    return make_node(a->shape, std::move(v), {a, b}, [](Tensor& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) pb.grad[i] -= self.grad[i];
        }
    });
}

TensorPtr scale(const TensorPtr& a, float s) {
    std::vector<float> v(a->data.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a->data[i] * s;
    return make_node(a->shape, std::move(v), {a}, [s](Tensor& self) {
        auto& pa = *self.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += s * self.grad[i];
    });
}

TensorPtr add_rows(const TensorPtr& mat, const TensorPtr& vec) {
    require_rank2ish(mat, "add_rows");
    if (vec->shape.size() != 1 || vec->shape[0] != mat->cols()) {
        throw DimensionError("add_rows: vec " + shape_str(vec->shape) + " does not match mat " +
                             shape_str(mat->shape));
    }
    const int r = mat->rows(), c = mat->cols();
    std::vector<float> v(mat->data.size());
    for (int i = 0; i < r; ++i) {
        for (int j = 0; j < c; ++j) {
            v[static_cast<std::size_t>(i) * c + j] = mat->data[static_cast<std::size_t>(i) * c + j] + vec->data[j];
        }
    }
    return make_node(mat->shape, std::move(v), {mat, vec}, [r, c](Tensor& self) {
        auto& pm = *self.parents[0];
        auto& pv = *self.parents[1];
        if (pm.requires_grad) {
            pm.ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) pm.grad[i] += self.grad[i];
        }
        if (pv.requires_grad) {
            pv.ensure_grad();
            for (int i = 0; i < r; ++i) {
                for (int j = 0; j < c; ++j) pv.grad[j] += self.grad[static_cast<std::size_t>(i) * c + j];
            }
        }
    });
}

TensorPtr gelu(const TensorPtr& x) {
    // tanh form: 0.5 x (1 + tanh(c (x + a x^3))), c = sqrt(2/pi), a = 0.044715
    std::vector<float> v(x->data.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        float xi = x->data[i];
        float u = kGeluC * (xi + kGeluA * xi * xi * xi);
        v[i] = 0.5f * xi * (1.0f + std::tanh(u));
    }
    return make_node(x->shape, std::move(v), {x}, [](Tensor& self) {
        auto& px = *self.parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            float xi = px.data[i];
            float u = kGeluC * (xi + kGeluA * xi * xi * xi);
            float t = std::tanh(u);
            float du = kGeluC * (1.0f + 3.0f * kGeluA * xi * xi);
            float d = 0.5f * (1.0f + t) + 0.5f * xi * (1.0f - t * t) * du;
            px.grad[i] += d * self.grad[i];
        }
    });
}

TensorPtr transpose(const TensorPtr& x) {
    if (x->shape.size() != 2) throw DimensionError("transpose: expected rank 2, got " + shape_str(x->shape));
    const int r = x->shape[0], c = x->shape[1];
    std::vector<float> v(x->data.size());
    for (int i = 0; i < r; ++i) {
        for (int j = 0; j < c; ++j) v[static_cast<std::size_t>(j) * r + i] = x->data[static_cast<std::size_t>(i) * c + j];
    }
    return make_node({c, r}, std::move(v), {x}, [r, c](Tensor& self) {
        auto& px = *self.parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        for (int i = 0; i < r; ++i) {
            for (int j = 0; j < c; ++j) {
                px.grad[static_cast<std::size_t>(i) * c + j] += self.grad[static_cast<std::size_t>(j) * r + i];
            }
        }
    });
}

TensorPtr reshape(const TensorPtr& x, std::vector<int> shape) {
    check_shape(shape);
    if (product(shape) != x->numel()) {
        throw DimensionError("reshape: cannot view " + shape_str(x->shape) + " as " + shape_str(shape));
    }
    std::vector<float> v = x->data;
    return make_node(std::move(shape), std::move(v), {x}, [](Tensor& self) {
        auto& px = *self.parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) px.grad[i] += self.grad[i];
    });
}

TensorPtr concat_rows(const std::vector<TensorPtr>& parts) {
    if (parts.empty()) throw DimensionError("concat_rows: no parts");
    const int c = parts[0]->cols();
    int total_rows = 0;
    for (const auto& p : parts) {
        require_rank2ish(p, "concat_rows");
        if (p->cols() != c) {
            throw DimensionError("concat_rows: column mismatch " + shape_str(p->shape) + " vs " +
                                 shape_str(parts[0]->shape));
        }
        total_rows += p->rows();
    }
    std::vector<float> v;
    v.reserve(static_cast<std::size_t>(total_rows) * c);
    for (const auto& p : parts) v.insert(v.end(), p->data.begin(), p->data.end());
    return make_node({total_rows, c}, std::move(v), parts, [](Tensor& self) {
        std::size_t offset = 0;
        for (auto& p : self.parents) {
            if (p->requires_grad) {
                p->ensure_grad();
                for (std::size_t i = 0; i < p->data.size(); ++i) p->grad[i] += self.grad[offset + i];
            }
            offset += p->data.size();
        }
    });
}

TensorPtr concat_cols(const std::vector<TensorPtr>& parts) {
    if (parts.empty()) throw DimensionError("concat_cols: no parts");
    const int r = parts[0]->rows();
    int total_cols = 0;
    for (const auto& p : parts) {
        require_rank2ish(p, "concat_cols");
        if (p->rows() != r) {
            throw DimensionError("concat_cols: row mismatch " + shape_str(p->shape) + " vs " +
                                 shape_str(parts[0]->shape));
        }
        total_cols += p->cols();
    }
    std::vector<float> v(static_cast<std::size_t>(r) * total_cols);
    int col0 = 0;
    for (const auto& p : parts) {
        const int pc = p->cols();
        for (int i = 0; i < r; ++i) {
            for (int j = 0; j < pc; ++j) {
                v[static_cast<std::size_t>(i) * total_cols + col0 + j] = p->data[static_cast<std::size_t>(i) * pc + j];
            }
        }
        col0 += pc;
    }
    return make_node({r, total_cols}, std::move(v), parts, [r, total_cols](Tensor& self) {
        int c0 = 0;
        for (auto& p : self.parents) {
            const int pc = p->cols();
            if (p->requires_grad) {
                p->ensure_grad();
                for (int i = 0; i < r; ++i) {
                    for (int j = 0; j < pc; ++j) {
                        p->grad[static_cast<std::size_t>(i) * pc + j] +=
                            self.grad[static_cast<std::size_t>(i) * total_cols + c0 + j];
                    }
                }
            }
            c0 += pc;
        }
    });
}

TensorPtr slice_rows(const TensorPtr& x, int r0, int r1) {
    require_rank2ish(x, "slice_rows");
    const int r = x->rows(), c = x->cols();
    if (r0 < 0 || r1 > r || r0 >= r1) {
        throw DimensionError("slice_rows: [" + std::to_string(r0) + "," + std::to_string(r1) +
                             ") out of range for " + shape_str(x->shape));
    }
    std::vector<float> v(x->data.begin() + static_cast<std::size_t>(r0) * c,
                         x->data.begin() + static_cast<std::size_t>(r1) * c);
    return make_node({r1 - r0, c}, std::move(v), {x}, [r0, c](Tensor& self) {
        auto& px = *self.parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        const std::size_t base = static_cast<std::size_t>(r0) * c;
        for (std::size_t i = 0; i < self.grad.size(); ++i) px.grad[base + i] += self.grad[i];
    });
}

TensorPtr slice_cols(const TensorPtr& x, int c0, int c1) {
    require_rank2ish(x, "slice_cols");
    const int r = x->rows(), c = x->cols();
    if (c0 < 0 || c1 > c || c0 >= c1) {
        throw DimensionError("slice_cols: [" + std::to_string(c0) + "," + std::to_string(c1) +
                             ") out of range for " + shape_str(x->shape));
    }
    const int w = c1 - c0;
    std::vector<float> v(static_cast<std::size_t>(r) * w);
    for (int i = 0; i < r; ++i) {
        for (int j = 0; j < w; ++j) v[static_cast<std::size_t>(i) * w + j] = x->data[static_cast<std::size_t>(i) * c + c0 + j];
    }
    return make_node({r, w}, std::move(v), {x}, [r, c, c0, w](Tensor& self) {
        auto& px = *self.parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        for (int i = 0; i < r; ++i) {
            for (int j = 0; j < w; ++j) {
                px.grad[static_cast<std::size_t>(i) * c + c0 + j] += self.grad[static_cast<std::size_t>(i) * w + j];
            }
        }
    });
}

TensorPtr gather_rows(const TensorPtr& x, const std::vector<int>& indices) {
    require_rank2ish(x, "gather_rows");
    const int r = x->rows(), c = x->cols();
    for (int idx : indices) {
        if (idx < 0 || idx >= r) {
            throw ContractError("gather_rows: index " + std::to_string(idx) + " out of range for " +
                                shape_str(x->shape));
        }
    }
    std::vector<float> v(indices.size() * static_cast<std::size_t>(c));
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const float* src = x->data.data() + static_cast<std::size_t>(indices[i]) * c;
        std::copy(src, src + c, v.begin() + i * c);
    }
    auto idx_copy = indices;
    return make_node({static_cast<int>(indices.size()), c}, std::move(v), {x},
                     [idx = std::move(idx_copy), c](Tensor& self) {
                         auto& px = *self.parents[0];
                         if (!px.requires_grad) return;
                         px.ensure_grad();
                         for (std::size_t i = 0; i < idx.size(); ++i) {
                             for (int j = 0; j < c; ++j) {
                                 px.grad[static_cast<std::size_t>(idx[i]) * c + j] += self.grad[i * c + j];
                             }
                         }
                     });
}

TensorPtr detach(const TensorPtr& x) {
    return Tensor::make(x->shape, x->data, false);
}

TensorPtr matmul(const TensorPtr& a, const TensorPtr& b) {
    if (a->shape.size() != 2 || b->shape.size() != 2 || a->shape[1] != b->shape[0]) {
        throw DimensionError("matmul: incompatible shapes " + shape_str(a->shape) + " and " + shape_str(b->shape));
    }
    const int m = a->shape[0], k = a->shape[1], n = b->shape[1];
    std::vector<float> v(static_cast<std::size_t>(m) * n, 0.0f);
    // i-k-j order keeps b row-contiguous in the inner loop
    for (int i = 0; i < m; ++i) {
        const float* arow = a->data.data() + static_cast<std::size_t>(i) * k;
        float* vrow = v.data() + static_cast<std::size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const float ap = arow[p];
            if (ap == 0.0f) continue;
            const float* brow = b->data.data() + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) vrow[j] += ap * brow[j];
        }
    }
    return make_node({m, n}, std::move(v), {a, b}, [m, k, n](Tensor& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();  // dL/da = g . b^T
            for (int i = 0; i < m; ++i) {
                const float* grow = self.grad.data() + static_cast<std::size_t>(i) * n;
                float* garow = pa.grad.data() + static_cast<std::size_t>(i) * k;
                for (int p = 0; p < k; ++p) {
                    const float* brow = pb.data.data() + static_cast<std::size_t>(p) * n;
                    float acc = 0.0f;
                    for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
                    garow[p] += acc;
                }
            }
        }
        if (pb.requires_grad) {
            pb.ensure_grad();  // dL/db = a^T . g
            for (int i = 0; i < m; ++i) {
                const float* arow = pa.data.data() + static_cast<std::size_t>(i) * k;
                const float* grow = self.grad.data() + static_cast<std::size_t>(i) * n;
                for (int p = 0; p < k; ++p) {
                    const float ap = arow[p];
                    if (ap == 0.0f) continue;
                    float* gbrow = pb.grad.data() + static_cast<std::size_t>(p) * n;
                    for (int j = 0; j < n; ++j) gbrow[j] += ap * grow[j];
                }
            }
        }
    });
}

TensorPtr sum(const TensorPtr& x) {
    float acc = 0.0f;
    for (float v : x->data) acc += v;
    return make_node({1}, {acc}, {x}, [](Tensor& self) {
        auto& px = *self.parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        const float g = self.grad[0];
        for (auto& gv : px.grad) gv += g;
    });
}

TensorPtr mean(const TensorPtr& x) {
    const float inv = 1.0f / static_cast<float>(x->numel());
    float acc = 0.0f;
    for (float v : x->data) acc += v;
    return make_node({1}, {acc * inv}, {x}, [inv](Tensor& self) {
        auto& px = *self.parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        const float g = self.grad[0] * inv;
        for (auto& gv : px.grad) gv += g;
    });
}

TensorPtr layer_norm(const TensorPtr& x, const TensorPtr& gain, const TensorPtr& bias, float eps) {
    require_rank2ish(x, "layer_norm");
    if (eps <= 0.0f) throw ContractError("layer_norm: eps must be positive");
    const int r = x->rows(), d = x->cols();
    if (gain->shape.size() != 1 || gain->shape[0] != d || bias->shape.size() != 1 || bias->shape[0] != d) {
        throw DimensionError("layer_norm: gain " + shape_str(gain->shape) + " / bias " + shape_str(bias->shape) +
                             " do not match feature dim of " + shape_str(x->shape));
    }
    std::vector<float> v(x->data.size());
    std::vector<float> inv_std(r), mu(r);
    for (int i = 0; i < r; ++i) {
        const float* row = x->data.data() + static_cast<std::size_t>(i) * d;
        float m = 0.0f;
        for (int j = 0; j < d; ++j) m += row[j];
        m /= static_cast<float>(d);
        float var = 0.0f;
        for (int j = 0; j < d; ++j) {
            float c = row[j] - m;
            var += c * c;
        }
        var /= static_cast<float>(d);
        const float is = 1.0f / std::sqrt(var + eps);
        mu[i] = m;
        inv_std[i] = is;
        float* out = v.data() + static_cast<std::size_t>(i) * d;
        for (int j = 0; j < d; ++j) out[j] = (row[j] - m) * is * gain->data[j] + bias->data[j];
    }
    return make_node(x->shape, std::move(v), {x, gain, bias},
                     [r, d, mu = std::move(mu), inv_std = std::move(inv_std)](Tensor& self) {
                         auto& px = *self.parents[0];
                         auto& pg = *self.parents[1];
                         auto& pb = *self.parents[2];
                         for (int i = 0; i < r; ++i) {
                             const float* row = px.data.data() + static_cast<std::size_t>(i) * d;
                             const float* g = self.grad.data() + static_cast<std::size_t>(i) * d;
                             const float is = inv_std[i], m = mu[i];
                             if (pg.requires_grad || pb.requires_grad) {
                                 if (pg.requires_grad) pg.ensure_grad();
                                 if (pb.requires_grad) pb.ensure_grad();
                                 for (int j = 0; j < d; ++j) {
                                     const float xhat = (row[j] - m) * is;
                                     if (pg.requires_grad) pg.grad[j] += g[j] * xhat;
                                     if (pb.requires_grad) pb.grad[j] += g[j];
                                 }
                             }
                             if (px.requires_grad) {
                                 px.ensure_grad();
                                 float* gx = px.grad.data() + static_cast<std::size_t>(i) * d;
                                 float sum_dxhat = 0.0f, sum_dxhat_xhat = 0.0f;
                                 for (int j = 0; j < d; ++j) {
                                     const float xhat = (row[j] - m) * is;
                                     const float dxhat = g[j] * pg.data[j];
                                     sum_dxhat += dxhat;
                                     sum_dxhat_xhat += dxhat * xhat;
                                 }
                                 const float invd = 1.0f / static_cast<float>(d);
                                 for (int j = 0; j < d; ++j) {
                                     const float xhat = (row[j] - m) * is;
                                     const float dxhat = g[j] * pg.data[j];
                                     gx[j] += is * (dxhat - invd * sum_dxhat - xhat * invd * sum_dxhat_xhat);
                                 }
                             }
                         }
                     });
}

TensorPtr softmax(const TensorPtr& x) {
    require_rank2ish(x, "softmax");
    const int r = x->rows(), d = x->cols();
    std::vector<float> v(x->data.size());
    for (int i = 0; i < r; ++i) {
        const float* row = x->data.data() + static_cast<std::size_t>(i) * d;
        float* out = v.data() + static_cast<std::size_t>(i) * d;
        float mx = row[0];
        for (int j = 1; j < d; ++j) mx = std::max(mx, row[j]);
        float z = 0.0f;
        for (int j = 0; j < d; ++j) {
            out[j] = std::exp(row[j] - mx);
            z += out[j];
        }
        const float inv = 1.0f / z;
        for (int j = 0; j < d; ++j) out[j] *= inv;
    }
    return make_node(x->shape, std::move(v), {x}, [r, d](Tensor& self) {
        auto& px = *self.parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        for (int i = 0; i < r; ++i) {
            const float* y = self.data.data() + static_cast<std::size_t>(i) * d;
            const float* g = self.grad.data() + static_cast<std::size_t>(i) * d;
            float* gx = px.grad.data() + static_cast<std::size_t>(i) * d;
            float dot = 0.0f;
            for (int j = 0; j < d; ++j) dot += g[j] * y[j];
            for (int j = 0; j < d; ++j) gx[j] += y[j] * (g[j] - dot);
        }
    });
}

TensorPtr l2_normalize(const TensorPtr& x) {
    require_rank2ish(x, "l2_normalize");
    const int r = x->rows(), d = x->cols();
    std::vector<float> v(x->data.size());
    std::vector<float> inv_norm(r);
    for (int i = 0; i < r; ++i) {
        const float* row = x->data.data() + static_cast<std::size_t>(i) * d;
        float n2 = 0.0f;
        for (int j = 0; j < d; ++j) n2 += row[j] * row[j];
        if (n2 == 0.0f) {
            throw DegenerateInputError("l2_normalize: row " + std::to_string(i) + " has zero norm");
        }
        const float inv = 1.0f / std::sqrt(n2);
        inv_norm[i] = inv;
        float* out = v.data() + static_cast<std::size_t>(i) * d;
        for (int j = 0; j < d; ++j) out[j] = row[j] * inv;
    }
    return make_node(x->shape, std::move(v), {x}, [r, d, inv_norm = std::move(inv_norm)](Tensor& self) {
        auto& px = *self.parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        for (int i = 0; i < r; ++i) {
            const float* y = self.data.data() + static_cast<std::size_t>(i) * d;
            const float* g = self.grad.data() + static_cast<std::size_t>(i) * d;
            float* gx = px.grad.data() + static_cast<std::size_t>(i) * d;
            float dot = 0.0f;
            for (int j = 0; j < d; ++j) dot += g[j] * y[j];
            const float inv = inv_norm[i];
            for (int j = 0; j < d; ++j) gx[j] += (g[j] - y[j] * dot) * inv;
        }
    });
}

TensorPtr cross_entropy_mean(const TensorPtr& logits, const std::vector<int>& labels) {
    if (logits->shape.size() != 2) {
        throw DimensionError("cross_entropy_mean: logits must be rank 2, got " + shape_str(logits->shape));
    }
    const int b = logits->shape[0], a = logits->shape[1];
    if (static_cast<int>(labels.size()) != b) {
        throw ContractError("cross_entropy_mean: " + std::to_string(labels.size()) + " labels for " +
                            std::to_string(b) + " rows");
    }
    for (int lbl : labels) {
        if (lbl < 0 || lbl >= a) {
            throw ContractError("cross_entropy_mean: label " + std::to_string(lbl) + " outside [0," +
                                std::to_string(a) + ")");
        }
    }
    double acc = 0.0;
    for (int i = 0; i < b; ++i) {
        const float* row = logits->data.data() + static_cast<std::size_t>(i) * a;
        float mx = row[0];
        for (int j = 1; j < a; ++j) mx = std::max(mx, row[j]);
        float z = 0.0f;
        for (int j = 0; j < a; ++j) z += std::exp(row[j] - mx);
        acc += (mx + std::log(z)) - row[labels[i]];
    }
    auto lbl_copy = labels;
    return make_node({1}, {static_cast<float>(acc / b)}, {logits},
                     [b, a, labels = std::move(lbl_copy)](Tensor& self) {
                         auto& pl = *self.parents[0];
                         if (!pl.requires_grad) return;
                         pl.ensure_grad();
                         const float gscale = self.grad[0] / static_cast<float>(b);
                         for (int i = 0; i < b; ++i) {
                             const float* row = pl.data.data() + static_cast<std::size_t>(i) * a;
                             float* gx = pl.grad.data() + static_cast<std::size_t>(i) * a;
                             float mx = row[0];
                             for (int j = 1; j < a; ++j) mx = std::max(mx, row[j]);
                             float z = 0.0f;
                             for (int j = 0; j < a; ++j) z += std::exp(row[j] - mx);
                             const float inv = 1.0f / z;
                             for (int j = 0; j < a; ++j) {
                                 float p = std::exp(row[j] - mx) * inv;
                                 gx[j] += gscale * (p - (j == labels[i] ? 1.0f : 0.0f));
                             }
                         }
                     });
}

}  // namespace dva
