#pragma once

#include <functional>
#include <string>

namespace sobolattr {

/// Writes through a temp file in the target directory, then renames into
/// place, so readers never observe a partial file.
void atomic_write(const std::string& path,
                  const std::function<void(const std::string& tmp_path)>& writer);

/// atomic_write specialization for full-content strings.
void atomic_write_text(const std::string& path, const std::string& content);

std::string read_text_file(const std::string& path);

/// FNV-1a over bytes; stable across platforms, used for config hashes.
std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t seed = 0xcbf29ce484222325ull);
std::string hex64(std::uint64_t value);

}  // namespace sobolattr
