#include "tnt/io/apps.hpp"

int main(int argc, char** argv) { return tnt::io::app_main(tnt::io::App::evolve, argc, argv); }
