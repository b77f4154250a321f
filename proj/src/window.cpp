#include "diffstg/window.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace diffstg {

void STGWindow::validate() const {
  const std::size_t len = length();
  if (nodes == 0 || features == 0 || history == 0 || horizon == 0) {
    throw std::invalid_argument("window: zero-sized dimension");
  }
  if (x_all.size() != features * nodes * len || mask.size() != nodes * len) {
    throw std::invalid_argument("window: buffer sizes do not match F=" + std::to_string(features) +
                                " V=" + std::to_string(nodes) + " T=" + std::to_string(len));
  }
  if (graph && graph->num_nodes() != nodes) {
    throw std::invalid_argument("window: graph has " + std::to_string(graph->num_nodes()) +
                                " nodes, window has " + std::to_string(nodes));
  }
  for (std::size_t i = 0; i < x_all.size(); ++i) {
    if (!std::isfinite(x_all[i])) throw std::invalid_argument("window: non-finite value at flat index " + std::to_string(i));
  }
  for (std::size_t v = 0; v < nodes; ++v) {
    for (std::size_t t = 0; t < len; ++t) {
      if (mask[v * len + t] != (t < history ? 1 : 0)) {
        throw std::invalid_argument("window: mask must be 1 on the first T_h steps and 0 after (node " +
                                    std::to_string(v) + ", t " + std::to_string(t) + ")");
      }
    }
  }
}

}  // namespace diffstg
