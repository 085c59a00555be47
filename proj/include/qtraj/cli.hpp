/* Copyright 2026 The qtraj Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef QTRAJ_CLI_HPP
#define QTRAJ_CLI_HPP

#include <iosfwd>

namespace qtraj {

inline constexpr const char* kVersion = "0.1.0";

/// Exit codes of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitFail = 1, kExitConfig = 2 };

/// Entry point of the `qtraj` tool: simulate | verify | born | postselect |
/// marginal. Outputs land in --out-dir and appear only if the command
/// succeeds.
int run_cli(int argc, const char* const* argv, std::ostream& out,
            std::ostream& err);

} // namespace qtraj

#endif
