#pragma once

#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "simgan/core/digest.hpp"
#include "simgan/nn/module.hpp"

namespace simgan::nn {

/// Ordered chain of modules with value semantics (copies deep-clone).
class Sequential final : public Module {
public:
    Sequential() = default;
    Sequential(const Sequential& other) : Module(other)
    {
        for (const auto& m : other.modules_) {
            modules_.push_back(m->clone());
        }
    }
    Sequential& operator=(const Sequential& other)
    {
        if (this != &other) {
            Sequential tmp(other);
            *this = std::move(tmp);
        }
        return *this;
    }
    Sequential(Sequential&&) noexcept = default;
    Sequential& operator=(Sequential&&) noexcept = default;
    ~Sequential() override = default;

    template <typename M, typename... Args>
    M& add(Args&&... args)
    {
        auto m = std::make_unique<M>(std::forward<Args>(args)...);
        M& ref = *m;
        modules_.push_back(std::move(m));
        return ref;
    }
    void push(std::unique_ptr<Module> m) { modules_.push_back(std::move(m)); }

    [[nodiscard]] std::size_t size() const { return modules_.size(); }
    Module& operator[](std::size_t i) { return *modules_[i]; }
    const Module& operator[](std::size_t i) const { return *modules_[i]; }

    Tensor forward(const Tensor& x) override
    {
        Tensor h = x;
        for (auto& m : modules_) {
            h = m->forward(h);
        }
        return h;
    }

    [[nodiscard]] Tensor infer(const Tensor& x) const override
    {
        Tensor h = x;
        for (const auto& m : modules_) {
            h = m->infer(h);
        }
        return h;
    }

    /// Stops descending once no earlier module needs a gradient.
    Tensor backward(const Tensor& grad_out, bool need_input_grad) override
    {
        std::size_t first = 0;
        if (!need_input_grad) {
            first = modules_.size();
            for (std::size_t i = 0; i < modules_.size(); ++i) {
                if (wants_param_grads(*modules_[i])) {
                    first = i;
                    break;
                }
            }
            if (first == modules_.size()) {
                return {};
            }
        }
        Tensor g = grad_out;
        for (std::size_t i = modules_.size(); i-- > first;) {
            g = modules_[i]->backward(g, need_input_grad || i > first);
        }
        return g;
    }

    std::vector<Parameter*> parameters() override
    {
        std::vector<Parameter*> out;
        for (auto& m : modules_) {
            auto p = m->parameters();
            out.insert(out.end(), p.begin(), p.end());
        }
        return out;
    }
    [[nodiscard]] std::vector<const Parameter*> parameters() const override
    {
        std::vector<const Parameter*> out;
        for (const auto& m : modules_) {
            auto p = std::as_const(*m).parameters();
            out.insert(out.end(), p.begin(), p.end());
        }
        return out;
    }
    std::vector<Tensor*> buffers() override
    {
        std::vector<Tensor*> out;
        for (auto& m : modules_) {
            auto b = m->buffers();
            out.insert(out.end(), b.begin(), b.end());
        }
        return out;
    }
    [[nodiscard]] std::vector<const Tensor*> buffers() const override
    {
        std::vector<const Tensor*> out;
        for (const auto& m : modules_) {
            auto b = std::as_const(*m).buffers();
            out.insert(out.end(), b.begin(), b.end());
        }
        return out;
    }

    /// Sets the trainable flag on every contained module.
    void set_all_trainable(bool on)
    {
        set_trainable(on);
        for (auto& m : modules_) {
            if (auto* s = dynamic_cast<Sequential*>(m.get())) {
                s->set_all_trainable(on);
            } else {
                m->set_trainable(on);
            }
        }
    }

    [[nodiscard]] bool any_trainable_parameters() const
    {
        for (const auto& m : modules_) {
            if (wants_param_grads(*m)) {
                return true;
            }
        }
        return false;
    }

    [[nodiscard]] std::unique_ptr<Module> clone() const override { return std::make_unique<Sequential>(*this); }
    [[nodiscard]] std::string_view kind() const override { return "sequential"; }

private:
    static bool wants_param_grads(const Module& m)
    {
        if (const auto* s = dynamic_cast<const Sequential*>(&m)) {
            return s->any_trainable_parameters();
        }
        return m.trainable() && !m.parameters().empty();
    }

    std::vector<std::unique_ptr<Module>> modules_;
};

/// Every persistent tensor (parameters, then buffers) of a module, in a stable order.
inline std::vector<const Tensor*> state_tensors(const Module& m)
{
    std::vector<const Tensor*> out;
    for (const Parameter* p : m.parameters()) {
        out.push_back(&p->value);
    }
    for (const Tensor* b : m.buffers()) {
        out.push_back(b);
    }
    return out;
}

inline std::vector<Tensor*> state_tensors(Module& m)
{
    std::vector<Tensor*> out;
    for (Parameter* p : m.parameters()) {
        out.push_back(&p->value);
    }
    for (Tensor* b : m.buffers()) {
        out.push_back(b);
    }
    return out;
}

/// SHA-256 over shapes and raw values of the given tensors.
inline std::string digest_tensors(std::span<const Tensor* const> tensors)
{
    Sha256 h;
    for (const Tensor* t : tensors) {
        const Shape& s = t->shape();
        const int dims[4] = {s.n, s.c, s.h, s.w};
        h.update(dims, sizeof(dims));
        h.update(t->span());
    }
    return h.hex();
}

inline std::string digest_module(const Module& m)
{
    auto t = state_tensors(m);
    return digest_tensors(t);
}

} // namespace simgan::nn
