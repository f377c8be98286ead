#include "hadit/image.hpp"

#include <fstream>
#include <stdexcept>

namespace hadit {

void write_ppm(const RgbImage& img, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f << "P6\n" << img.width << " " << img.height << "\n255\n";
    f.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
    if (!f) throw std::runtime_error("write failed: " + path);
}

RgbImage read_ppm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open: " + path);
    std::string magic;
    f >> magic;
    if (magic != "P6") throw std::runtime_error("not a P6 ppm: " + path);
    auto next_int = [&f, &path]() {
        // skip whitespace and '#' comments
        int c = f.peek();
        while (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '#') {
            if (c == '#') {
                std::string line;
                std::getline(f, line);
            } else {
                f.get();
            }
            c = f.peek();
        }
        int v;
        if (!(f >> v)) throw std::runtime_error("truncated ppm header: " + path);
        return v;
    };
    const int w = next_int();
    const int h = next_int();
    const int maxval = next_int();
    if (maxval != 255) throw std::runtime_error("unsupported ppm maxval: " + path);
    f.get();  // single whitespace after header
    RgbImage img(w, h);
    f.read(reinterpret_cast<char*>(img.pixels.data()),
           static_cast<std::streamsize>(img.pixels.size()));
    if (f.gcount() != static_cast<std::streamsize>(img.pixels.size()))
        throw std::runtime_error("truncated ppm data: " + path);
    return img;
}

}  // namespace hadit
