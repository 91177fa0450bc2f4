#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "simgan/core/tensor.hpp"

namespace simgan::nn {

struct Parameter {
    Tensor value;
    Tensor grad;

    Parameter() = default;
    explicit Parameter(Tensor v) : value(std::move(v)), grad(value.shape()) {}
};

/// A differentiable operation.
///
/// `forward` is the training path: it may cache whatever `backward` needs and
/// may update internal statistics (batch norm). `infer` is side-effect free and
/// safe to call concurrently on a shared instance. `backward` accumulates into
/// parameter gradients (unless the module is frozen) and returns the gradient
/// with respect to the last `forward` input when `need_input_grad` is set.
/// Calling `backward` twice after one `forward` is allowed.
class Module {
public:
    virtual ~Module() = default;

    virtual Tensor forward(const Tensor& x) = 0;
    [[nodiscard]] virtual Tensor infer(const Tensor& x) const = 0;
    virtual Tensor backward(const Tensor& grad_out, bool need_input_grad) = 0;

    virtual std::vector<Parameter*> parameters() { return {}; }
    [[nodiscard]] virtual std::vector<const Parameter*> parameters() const { return {}; }
    /// Non-trainable persistent state (batch-norm running statistics).
    virtual std::vector<Tensor*> buffers() { return {}; }
    [[nodiscard]] virtual std::vector<const Tensor*> buffers() const { return {}; }

    [[nodiscard]] virtual std::unique_ptr<Module> clone() const = 0;
    [[nodiscard]] virtual std::string_view kind() const = 0;

    [[nodiscard]] bool trainable() const { return trainable_; }
    void set_trainable(bool on) { trainable_ = on; }

    void zero_grad()
    {
        for (Parameter* p : parameters()) {
            p->grad.zero();
        }
    }

private:
    bool trainable_ = true;
};

} // namespace simgan::nn
