// SPDX-License-Identifier: MIT
#pragma once

#include <filesystem>
#include <string>

namespace testutil {

/// Fresh scratch directory under the build tree.
inline std::filesystem::path scratch(const std::string& name) {
    const auto dir = std::filesystem::path(SEGPLAN_TEST_TMP) / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace testutil
