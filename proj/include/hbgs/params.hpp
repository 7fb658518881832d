#pragma once

// Registry of named learnable arrays with Adam state and group-level freeze
// masks. Views raw storage owned by the model structs; registering an array
// pins its address, so owners must not resize after registration.

#include "hbgs/sha256.hpp"

#include <cmath>
#include <cstdint>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace hbgs {

struct ParamEntry {
    std::string name;
    std::string group;
    double* value = nullptr;
    double* grad = nullptr;
    size_t rows = 0, cols = 0;
    std::vector<double> adam_m;
    std::vector<double> adam_v;

    size_t size() const { return rows * cols; }
};

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class ParamStore {
  public:
    void add(const std::string& name, const std::string& group, double* value, double* grad,
             size_t rows, size_t cols) {
        for (const auto& e : entries_)
            if (e.name == name) throw std::runtime_error("duplicate parameter " + name);
        ParamEntry e;
        e.name = name;
        e.group = group;
        e.value = value;
        e.grad = grad;
        e.rows = rows;
        e.cols = cols;
        e.adam_m.assign(rows * cols, 0.0);
        e.adam_v.assign(rows * cols, 0.0);
        entries_.push_back(std::move(e));
    }

    std::vector<ParamEntry>& entries() { return entries_; }
    const std::vector<ParamEntry>& entries() const { return entries_; }

    ParamEntry& find(const std::string& name) {
        for (auto& e : entries_)
            if (e.name == name) return e;
        throw std::runtime_error("unknown parameter " + name);
    }

    void zero_grad() {
        for (auto& e : entries_)
            for (size_t i = 0; i < e.size(); ++i) e.grad[i] = 0.0;
    }

    void freeze_group(const std::string& group) { frozen_.insert(group); }
    void unfreeze_group(const std::string& group) { frozen_.erase(group); }
    bool is_frozen(const std::string& group) const { return frozen_.count(group) > 0; }
    const std::set<std::string>& frozen_groups() const { return frozen_; }

    // One bias-corrected adaptive-moment step. `lr_of_group` lets the caller
    // schedule groups independently; frozen groups are untouched, bit for bit.
    template <typename LrFn>
    void adam_step(uint64_t t, const AdamConfig& cfg, LrFn&& lr_of_group) {
        const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
        const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
        for (auto& e : entries_) {
            if (frozen_.count(e.group)) continue;
            const double lr = lr_of_group(e.group);
            for (size_t i = 0; i < e.size(); ++i) {
                const double g = e.grad[i];
                e.adam_m[i] = cfg.beta1 * e.adam_m[i] + (1.0 - cfg.beta1) * g;
                e.adam_v[i] = cfg.beta2 * e.adam_v[i] + (1.0 - cfg.beta2) * g * g;
                const double mhat = e.adam_m[i] / bc1;
                const double vhat = e.adam_v[i] / bc2;
                e.value[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
            }
        }
    }

    // SHA-256 over the raw bytes of every entry in the given group, in
    // registration order. Used to assert the freeze contract.
    std::string group_hash(const std::string& group) const {
        Sha256 h;
        for (const auto& e : entries_) {
            if (e.group != group) continue;
            h.update(e.value, e.size() * sizeof(double));
        }
        return h.hex_digest();
    }

    std::string hash_all_except(const std::string& excluded_group) const {
        Sha256 h;
        for (const auto& e : entries_) {
            if (e.group == excluded_group) continue;
            h.update(e.value, e.size() * sizeof(double));
        }
        return h.hex_digest();
    }

  private:
    std::vector<ParamEntry> entries_;
    std::set<std::string> frozen_;
};

}  // namespace hbgs
