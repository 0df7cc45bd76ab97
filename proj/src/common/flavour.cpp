#include "dtaas/common/flavour.hpp"

namespace dtaas {

std::string_view flavour_name(WorkspaceFlavour f) noexcept {
  switch (f) {
    case WorkspaceFlavour::IsolatedProcess: return "IsolatedProcess";
    case WorkspaceFlavour::SharedPool: return "SharedPool";
    case WorkspaceFlavour::Dedicated: return "Dedicated";
  }
  return "IsolatedProcess";
}

std::optional<WorkspaceFlavour> parse_flavour(std::string_view text) noexcept {
  if (text == "IsolatedProcess") return WorkspaceFlavour::IsolatedProcess;
  if (text == "SharedPool") return WorkspaceFlavour::SharedPool;
  if (text == "Dedicated") return WorkspaceFlavour::Dedicated;
  return std::nullopt;
}

}  // namespace dtaas
