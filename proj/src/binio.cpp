#include "cayley/binio.hpp"

#include <cstdio>
#include <filesystem>

namespace cayley {

std::string read_file(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw IoError("cannot open for reading: " + path);
  std::string out;
  char buf[1 << 16];
  size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, f)) > 0) out.append(buf, n);
  bool bad = std::ferror(f);
  std::fclose(f);
  if (bad) throw IoError("read error: " + path);
  return out;
}

void write_file(const std::string& path, std::string_view data) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError("cannot open for writing: " + path);
  size_t n = data.empty() ? 0 : std::fwrite(data.data(), 1, data.size(), f);
  bool bad = std::fclose(f) != 0 || n != data.size();
  if (bad) throw IoError("write error: " + path);
}

// Write to a sibling temp file then rename, so a crash never leaves a
// half-written artifact behind under the final name.
void write_file_atomic(const std::string& path, std::string_view data) {
  std::string tmp = path + ".tmp";
  write_file(tmp, data);
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("rename failed: " + tmp + " -> " + path + ": " + ec.message());
}

}  // namespace cayley
