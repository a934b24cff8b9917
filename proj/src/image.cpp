#include "rgan/image.hpp"

#include <fstream>

namespace rgan {

namespace {

// Reads one whitespace-delimited token, skipping '#' comment lines.
bool next_token(const std::vector<uint8_t>& b, size_t& pos, std::string& tok) {
  tok.clear();
  while (pos < b.size()) {
    const char c = char(b[pos]);
    if (c == '#') {
      while (pos < b.size() && b[pos] != '\n') ++pos;
    } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
      ++pos;
    } else {
      break;
    }
  }
  while (pos < b.size()) {
    const char c = char(b[pos]);
    if (c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '#') break;
    tok.push_back(c);
    ++pos;
  }
  return !tok.empty();
}

int parse_dim(const std::string& tok, const char* what) {
  try {
    const int v = std::stoi(tok);
    if (v <= 0) throw std::invalid_argument("nonpositive");
    return v;
  } catch (const std::exception&) {
    throw IoError(std::string("ppm: bad ") + what + " field '" + tok + "'");
  }
}

}  // namespace

ImageU8 decode_ppm(const std::vector<uint8_t>& bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6')
    throw IoError("ppm: bad magic, expected P6");
  size_t pos = 2;
  std::string tok;
  if (!next_token(bytes, pos, tok)) throw IoError("ppm: missing width");
  const int w = parse_dim(tok, "width");
  if (!next_token(bytes, pos, tok)) throw IoError("ppm: missing height");
  const int h = parse_dim(tok, "height");
  if (!next_token(bytes, pos, tok)) throw IoError("ppm: missing maxval");
  if (tok != "255")
    throw IoError("ppm: unsupported maxval " + tok + ", expected 255");
  // exactly one whitespace byte separates the header from the payload
  if (pos >= bytes.size()) throw IoError("ppm: truncated before payload");
  ++pos;

  const size_t need = size_t(w) * h * 3;
  if (bytes.size() - pos < need)
    throw IoError("ppm: truncated payload, need " + std::to_string(need) +
                  " bytes, have " + std::to_string(bytes.size() - pos));
  ImageU8 img(w, h);
  std::copy(bytes.begin() + long(pos), bytes.begin() + long(pos + need),
            img.pixels.begin());
  return img;
}

std::vector<uint8_t> encode_ppm(const ImageU8& img) {
  const std::string header = "P6\n" + std::to_string(img.width) + " " +
                             std::to_string(img.height) + "\n255\n";
  std::vector<uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.pixels.begin(), img.pixels.end());
  return out;
}

ImageU8 load_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  try {
    return decode_ppm(bytes);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void save_ppm(const std::filesystem::path& path, const ImageU8& img) {
  const std::vector<uint8_t> bytes = encode_ppm(img);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), long(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

}  // namespace rgan
