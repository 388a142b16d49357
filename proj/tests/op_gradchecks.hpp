#pragma once

// One gradcheck case per differentiable op, shared by the unit tests and the
// acceptance binary. Each case projects the op output onto fixed random
// weights so every output coordinate contributes to the scalar loss.

#include <string>
#include <vector>

#include "dpnse/ops.hpp"
#include "gradcheck.hpp"

namespace dpnse::testing {

struct OpGradcheck {
  std::string op;
  double max_rel_error;
  std::size_t checked;
  std::size_t skipped;
};

inline std::vector<OpGradcheck> op_gradchecks(std::uint64_t point, std::size_t coords = 40) {
  Rng rng(100 + point);
  std::vector<OpGradcheck> out;
  auto run = [&](const char* op, const std::function<Tensor()>& f, std::vector<Tensor> inputs) {
    const auto r = gradcheck(f, std::move(inputs), coords, point);
    out.push_back({op, r.max_rel_error, r.checked, r.skipped});
  };

  {
    Tensor x = random_tensor({2, 4, 5, 5}, rng), w = random_tensor({4, 2, 3, 3}, rng);
    Tensor proj = random_tensor({2, 4, 3, 3}, rng);
    run("conv2d", [&] { return sum(mul(conv2d(x, w, 2, 1, 2), proj)); }, {x, w});
  }
  {
    Tensor x = random_tensor({2, 2, 5, 5}, rng), proj = random_tensor({2, 2, 2, 2}, rng);
    run("maxpool2d", [&] { return sum(mul(maxpool2d(x, 3, 2), proj)); }, {x});
  }
  {
    Tensor x = random_tensor({2, 3, 3, 2}, rng), proj = random_tensor({2, 3}, rng);
    run("global_avg_pool", [&] { return sum(mul(global_avg_pool(x), proj)); }, {x});
  }
  {
    Tensor x = random_tensor({3, 4}, rng), w = random_tensor({4, 2}, rng),
           b = random_tensor({2}, rng), proj = random_tensor({3, 2}, rng);
    run("dense", [&] { return sum(mul(dense(x, w, b), proj)); }, {x, w, b});
  }
  {
    Tensor x = nudged_away_from_zero(random_tensor({2, 6}, rng)), proj = random_tensor({2, 6}, rng);
    run("relu", [&] { return sum(mul(relu(x), proj)); }, {x});
  }
  {
    Tensor x = random_tensor({2, 6}, rng, -4, 4), proj = random_tensor({2, 6}, rng);
    run("sigmoid", [&] { return sum(mul(sigmoid(x), proj)); }, {x});
  }
  {
    Tensor x = random_tensor({2, 5}, rng, -3, 3), proj = random_tensor({2, 5}, rng);
    run("softmax", [&] { return sum(mul(softmax(x), proj)); }, {x});
  }
  {
    Tensor x = random_tensor({2, 3, 3, 3}, rng), g = random_tensor({3}, rng, 0.5, 1.5),
           b = random_tensor({3}, rng), proj = random_tensor({2, 3, 3, 3}, rng);
    run("batch_norm", [&] { return sum(mul(batch_norm(x, g, b, 1e-5), proj)); }, {x, g, b});
  }
  {
    Tensor a = random_tensor({2, 2, 2, 2}, rng), b = random_tensor({2, 3, 2, 2}, rng);
    Tensor proj = random_tensor({2, 2, 2, 2}, rng);
    run("concat+slice",
        [&] { return sum(mul(slice_channels(concat_channels(a, b), 1, 3), proj)); }, {a, b});
  }
  {
    Tensor a = random_tensor({2, 3}, rng), b = random_tensor({2, 3}, rng);
    run("add+mul", [&] { return sum(mul(add(a, b), b)); }, {a, b});
  }
  {
    Tensor x = random_tensor({2, 3, 2, 2}, rng), z = random_tensor({2, 3}, rng);
    Tensor proj = random_tensor({2, 3, 2, 2}, rng);
    run("scale_channels", [&] { return sum(mul(scale_channels(x, z), proj)); }, {x, z});
  }
  {
    Tensor logits = random_tensor({3, 4}, rng, -2, 2);
    const std::vector<int> labels{0, 3, 1};
    run("cross_entropy", [&] { return cross_entropy(logits, labels); }, {logits});
  }
  return out;
}

}  // namespace dpnse::testing
