#pragma once

#include "csaseg/attention.hpp"

#include <string>
#include <vector>

namespace csaseg::cli {

// Mode strings accepted by --mode:
//   vanilla | csa | csa-q | csa-k | csa-id | identity | local:<size> |
//   sharpen:<tau> | ensemble:<n>:<seed> | early:<layer>
AttentionMode parse_mode(const std::string& text);

// Entry point behind main(). Exit codes: 0 success, 2 flag or config
// errors, 3 I/O errors, 4 shape or model errors.
int run(const std::vector<std::string>& args);

} // namespace csaseg::cli
