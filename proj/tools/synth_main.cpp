#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "../tests/testsupport/testsupport.hpp"

// Generates a synthetic spoken-command corpus (formant synthesis) with a
// manifest, standing in for a real dataset download.
int main(int argc, char** argv) {
  CLI::App app{"synthetic command corpus generator"};
  std::string out_dir;
  ts::CorpusSpec spec;
  spec.clips_per_class = 300;
  app.add_option("--out", out_dir, "output directory")->required();
  app.add_option("--classes", spec.n_classes, "number of command classes (max 10)");
  app.add_option("--clips", spec.clips_per_class, "clips per class");
  app.add_option("--test-fraction", spec.test_fraction, "share of clips tagged test");
  app.add_option("--seed", spec.seed, "corpus seed");
  CLI11_PARSE(app, argc, argv);

  if (spec.n_classes == 0 || spec.n_classes > ts::command_words().size()) {
    std::cerr << "error: classes must be 1.." << ts::command_words().size() << "\n";
    return 1;
  }
  if (spec.test_fraction < 0.0 || spec.test_fraction >= 1.0) {
    std::cerr << "error: test-fraction must be in [0,1)\n";
    return 1;
  }
  try {
    const auto manifest = ts::build_corpus(out_dir, spec);
    std::cout << "wrote " << manifest.string() << " (" << spec.n_classes << " classes x "
              << spec.clips_per_class << " clips)\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
