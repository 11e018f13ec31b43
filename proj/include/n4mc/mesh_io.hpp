// Copyright 2026 the n4mc authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <string>

#include "n4mc/mesh.hpp"

namespace n4mc {

// OBJ (v/f records) and PLY (ascii or binary_little_endian), chosen by
// extension. Attributes beyond positions and triangle faces are ignored on
// load; non-triangle faces are rejected. Throws FormatError with a line or
// byte position on malformed input.
TriangleMesh load_mesh(const std::string& path);

// Writes OBJ (shortest-roundtrip decimal) or binary little-endian PLY.
void save_mesh(const TriangleMesh& mesh, const std::string& path);

}  // namespace n4mc
