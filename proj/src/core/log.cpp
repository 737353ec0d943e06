/*
 * Copyright 2026 The guidex Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "core/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace guidex::log {

namespace {
std::atomic<Level> g_level{Level::kInfo};
std::atomic<std::size_t> g_warnings{0};
std::mutex g_mu;
}  // namespace

void set_level(Level l) { g_level = l; }
Level level() { return g_level; }

void info(std::string_view msg) {
  if (g_level < Level::kInfo) return;
  std::lock_guard<std::mutex> lock(g_mu);
  std::cerr << msg << '\n';
}

void warn(std::string_view msg) {
  ++g_warnings;
  if (g_level < Level::kWarning) return;
  std::lock_guard<std::mutex> lock(g_mu);
  std::cerr << "warning: " << msg << '\n';
}

std::size_t warning_count() { return g_warnings; }

}  // namespace guidex::log
