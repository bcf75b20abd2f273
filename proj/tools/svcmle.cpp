#include <svcmle/cli.hpp>

int main(int argc, char** argv)
{
    return svcmle::cli::run(argc, argv);
}
