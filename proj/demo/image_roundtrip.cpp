// Hides a small image in the labels of a synthetic noisy classifier, reads it
// back with repeated queries and CRC-guided correction, and writes both the
// original and the recovered picture.
//
//   covertex_demo [out_dir] [top1] [reads]

#include <filesystem>
#include <iostream>
#include <string>

#include "covertex/covertex.hpp"

using namespace covertex;

int main(int argc, char** argv) {
  const std::filesystem::path out = argc > 1 ? argv[1] : "demo_out";
  const double top1 = argc > 2 ? std::stod(argv[2]) : 0.9;
  const int reads = argc > 3 ? std::stoi(argv[3]) : 10;
  std::filesystem::create_directories(out);

  const ImageBuffer img = synthetic_natural(ImageShape{48, 32, 3}, 7);
  write_pnm(out / "original.ppm", img);

  const CecConfig cfg = select_config(top1);
  TransmitOptions to;
  to.ecc_block = cfg.data_cells;
  const Transmission tx = build_transmission(image_payload(img), to);
  std::cout << "payload " << tx.data.size() << " data cells, " << tx.cells.size() << " cells on the wire\n";

  NoisyChannelParams np;
  np.top1 = top1;
  np.rng_seed = 2;
  NoisyChannel model(np);
  const auto addrs = address_sequence(AddressKind::covert, 0x5EC7E7, tx.cells.size(), 2);
  model.write(plan_static(tx.cells, addrs, StaticPolicy{}));

  for (bool cec : {false, true}) {
    ReceiveOptions ro;
    ro.use_cec = cec;
    ro.top_k = cfg.top_k;
    ro.depth_limit = cfg.depth_limit;
    const Reception rx = receive(model, addrs, reads, ro);
    const auto back = payload_image(rx.bytes);
    const std::string name = cec ? "recovered_cec.ppm" : "recovered_raw.ppm";
    std::cout << (cec ? "with CEC:    " : "without CEC: ") << hamming_distance(tx.data, rx.data) << " wrong cells";
    if (back) {
      write_pnm(out / name, *back);
      std::cout << ", PSNR " << psnr(img, *back) << " dB -> " << (out / name).string();
    }
    std::cout << '\n';
  }
}
