#pragma once

#include <optional>
#include <string_view>

namespace dtaas {

/// Simulated workspace flavours. They differ only in runner scheduling
/// priority; capacity is charged identically.
enum class WorkspaceFlavour { IsolatedProcess, SharedPool, Dedicated };

std::string_view flavour_name(WorkspaceFlavour f) noexcept;
std::optional<WorkspaceFlavour> parse_flavour(std::string_view text) noexcept;

}  // namespace dtaas
