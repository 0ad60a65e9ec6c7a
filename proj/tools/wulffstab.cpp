#include "wulffstab/app.hpp"

int main(int argc, char** argv) { return wulffstab::app::run(argc, argv); }
