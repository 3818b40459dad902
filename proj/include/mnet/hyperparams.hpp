#pragma once

#include <cstdint>

namespace mnet {

/// One sampled training configuration.
struct HyperParams {
    double lr = 1e-3;
    double weight_decay = 0.0;
    int batch_size = 256;
    int hidden_dim = 32;
    int num_layers = 1;
    uint64_t seed = 0;

    bool operator==(const HyperParams&) const = default;
};

}  // namespace mnet
