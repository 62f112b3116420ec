#include <filesystem>
#include <fstream>

#include <doctest.h>

#include "bayatt/checkpoint.hpp"
#include "bayatt/error.hpp"
#include "test_helpers.hpp"

using namespace bayatt;
using test_helpers::TempDir;

namespace {

Model small_model(std::uint64_t seed = 4) {
  RngStream stream(seed, "ckpt");
  Normalization norm{{0.45}, {0.21}};
  return Model::init(ArchSpec::parse("mlp:5-3@gelu[4->3]"), stream, norm);
}

std::size_t file_size(const std::string& path) {
  return static_cast<std::size_t>(std::filesystem::file_size(path));
}

}  // namespace

TEST_CASE("checkpoint round trip reproduces forward outputs bitwise") {
  TempDir dir("ckpt_roundtrip");
  const Model m = small_model();
  const std::string path = dir.file("m.btck");
  save_checkpoint(m, path);
  const Model loaded = load_checkpoint(path);

  CHECK(loaded.arch() == m.arch());
  CHECK(loaded.normalization().mean == m.normalization().mean);
  RngStream stream(11, "x");
  const Tensor x = test_helpers::random_tensor(stream, {5, 4}, 0.0, 1.0);
  CHECK(bitwise_equal(m.forward(x), loaded.forward(x)));
}

TEST_CASE("blob length is 8 bytes per parameter plus the fixed framing") {
  TempDir dir("ckpt_size");
  const Model m = small_model();
  const std::string path = dir.file("m.btck");
  save_checkpoint(m, path);
  const auto contents = container::read(path);
  CHECK(contents.blob.size() == m.arch().param_count());
  // magic(4) + version(2) + desc_len(4) + desc + count(8) + 8*blob + crc(4)
  CHECK(file_size(path) ==
        4 + 2 + 4 + contents.descriptor.size() + 8 + 8 * m.arch().param_count() + 4);
}

TEST_CASE("truncated checkpoint fails the checksum, no partial model") {
  TempDir dir("ckpt_trunc");
  const Model m = small_model();
  const std::string path = dir.file("m.btck");
  save_checkpoint(m, path);

  std::ifstream in(path, std::ios::binary);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();
  for (std::size_t cut : {bytes.size() - 1, bytes.size() - 13, bytes.size() / 2}) {
    const std::string cut_path = dir.file("cut.btck");
    std::ofstream out(cut_path, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(cut));
    out.close();
    try {
      load_checkpoint(cut_path);
      FAIL("expected checksum failure");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::checksum_mismatch);
    }
  }
}

TEST_CASE("corrupt byte fails the checksum") {
  TempDir dir("ckpt_corrupt");
  const Model m = small_model();
  const std::string path = dir.file("m.btck");
  save_checkpoint(m, path);
  std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
  f.seekp(40);
  char b = 0x5A;
  f.write(&b, 1);
  f.close();
  try {
    load_checkpoint(path);
    FAIL("expected checksum failure");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::checksum_mismatch);
  }
}

TEST_CASE("bad magic and version mismatch get distinct codes") {
  TempDir dir("ckpt_magic");
  const Model m = small_model();
  const std::string path = dir.file("m.btck");
  save_checkpoint(m, path);
  std::ifstream in(path, std::ios::binary);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  in.close();

  auto rewrite = [&](std::size_t offset, unsigned char value, const std::string& leaf) {
    auto copy = bytes;
    copy[offset] = value;
    // Keep the trailing CRC consistent so the targeted check fires.
    const std::uint32_t crc = container::crc32(copy.data(), copy.size() - 4);
    for (int i = 0; i < 4; ++i)
      copy[copy.size() - 4 + static_cast<std::size_t>(i)] =
          static_cast<unsigned char>((crc >> (8 * i)) & 0xFF);
    const std::string p = dir.file(leaf);
    std::ofstream out(p, std::ios::binary);
    out.write(reinterpret_cast<const char*>(copy.data()), static_cast<std::streamsize>(copy.size()));
    return p;
  };

  try {
    load_checkpoint(rewrite(0, 'X', "badmagic.btck"));
    FAIL("expected bad magic");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::bad_magic);
  }
  try {
    load_checkpoint(rewrite(4, 0x7F, "badversion.btck"));
    FAIL("expected version mismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::version_mismatch);
  }
}
